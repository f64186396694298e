use kinetic_manifold::linear::{
    apply_k, apply_k0, apply_volterra, build_decomposition, green_apply, linear_center_solution, linear_residual,
    solve_inhomogeneous, trichotomy_project, Decomposition,
};
use kinetic_manifold::registry::entry;
use kinetic_manifold::{GridFunction, KineticModel, KmError};
use nalgebra::{DMatrix, DVector};

fn setup(name: &str) -> (KineticModel, Decomposition) {
    let m = entry(name).unwrap().build(None).unwrap();
    let dec = build_decomposition(&m).unwrap();
    (m, dec)
}

fn center_vector(dec: &Decomposition, weights: &[f64]) -> DVector<f64> {
    let basis = dec.center_basis();
    let mut w = DVector::zeros(dec.dims.n);
    for (j, c) in weights.iter().enumerate().take(basis.ncols()) {
        w += basis.column(j) * *c;
    }
    w
}

fn v_tilde_vector(dec: &Decomposition, f: impl Fn(usize) -> f64) -> DVector<f64> {
    let mut c = DVector::zeros(dec.dims.n);
    for (k, i) in dec.dims.v_tilde_range().enumerate() {
        c[i] = f(k);
    }
    dec.from_coords(&c)
}

#[test]
fn projections_partition_identity() {
    for name in ["gnl-min", "gnl-rich", "ldg-min", "nonchar"] {
        let (_, dec) = setup(name);
        let (pc, ps, pu) = (dec.center_projection(), dec.stable_projection(), dec.unstable_projection());
        let n = dec.dims.n;
        assert!((&pc + &ps + &pu - DMatrix::identity(n, n)).amax() < 1e-10, "{name}");
        for p in [&pc, &ps, &pu] {
            assert!((p * p - p).amax() < 1e-10, "{name}");
        }
        assert!((&pc * &ps).amax() < 1e-10 && (&ps * &pu).amax() < 1e-10, "{name}");
    }
}

#[test]
fn decomposition_invariants() {
    let (_, dec) = setup("gnl-rich");
    assert!((&dec.gamma0 - dec.gamma0.transpose()).amax() < 1e-12);
    assert!((&dec.e0 - dec.e0.transpose()).amax() < 1e-12);
    let e0_max = dec.e0.clone().symmetric_eigen().eigenvalues.max();
    assert!(e0_max <= -dec.delta + 1e-12);
    assert!(dec.s_eigs.iter().all(|l| l.abs() >= dec.nu - 1e-12 && *l != 0.0));
    let s = &dec.gamma0_inv * &dec.e0;
    for (j, &lam) in dec.s_eigs.iter().enumerate() {
        let v = dec.s_vecs.column(j);
        assert!((&s * v - v * lam).amax() < 1e-10);
    }
}

#[test]
fn trichotomy_split_of_special_vectors() {
    let (m, dec) = setup("gnl-min");
    let w = center_vector(&dec, &[0.3, -1.2, 0.7]);
    let (c, s, u) = trichotomy_project(&dec, &w);
    assert!((c - &w).amax() < 1e-12 && s.amax() < 1e-12 && u.amax() < 1e-12);
    let zero = DVector::zeros(m.dim);
    let (c, s, u) = trichotomy_project(&dec, &zero);
    assert_eq!((c.amax(), s.amax(), u.amax()), (0.0, 0.0, 0.0));
    let x = DVector::from_fn(m.dim, |i, _| 1.0 + i as f64);
    let (c, s, u) = trichotomy_project(&dec, &x);
    assert!((c + s + u - x).amax() < 1e-12);
}

#[test]
fn linear_center_solution_is_affine_solution() {
    let (m, dec) = setup("gnl-min");
    let w0 = center_vector(&dec, &[0.5, 0.2, -0.4]);
    assert!((linear_center_solution(&dec, &w0, 0.0).unwrap() - &w0).amax() < 1e-14);
    let x0 = linear_center_solution(&dec, &w0, 1.0).unwrap();
    let x1 = linear_center_solution(&dec, &w0, 2.0).unwrap();
    let slope = &x1 - &x0;
    let dq = m.dq_matrix(&m.u_bar);
    for x in [-3.0, 0.0, 5.0] {
        let value = linear_center_solution(&dec, &w0, x).unwrap();
        assert!((&m.a * &slope - &dq * value).amax() < 1e-10);
    }
}

#[test]
fn nonchar_center_flow_is_constant() {
    let (_, dec) = setup("nonchar");
    let w0 = center_vector(&dec, &[1.0]);
    let later = linear_center_solution(&dec, &w0, 7.5).unwrap();
    assert!((later - w0).amax() < 1e-12);
}

#[test]
fn off_center_vector_is_rejected() {
    let (m, dec) = setup("gnl-min");
    let w = DVector::from_fn(m.dim, |i, _| (i + 1) as f64);
    assert!(matches!(linear_center_solution(&dec, &w, 1.0), Err(KmError::NotCenter(_))));
    let f = GridFunction::zeros(10.0, 65, m.dim).unwrap();
    assert!(matches!(solve_inhomogeneous(&dec, &w, &f), Err(KmError::NotCenter(_))));
}

/// exp(x S) P through the dense matrix exponential.
fn dense_green(dec: &Decomposition, x: f64, v: &DVector<f64>) -> DVector<f64> {
    let s = &dec.gamma0_inv * &dec.e0;
    let z = dec.to_coords(v).rows_range(dec.dims.v_tilde_range()).into_owned();
    let k = dec.dims.v_tilde;
    // spectral projector onto the negative eigenvalues from the sign function
    let mut sign = DMatrix::zeros(k, k);
    for (j, &lam) in dec.s_eigs.iter().enumerate() {
        sign[(j, j)] = lam.signum();
    }
    let sign = &dec.s_vecs * sign * &dec.s_vecs_inv;
    let id = DMatrix::identity(k, k);
    let ps = (&id - &sign) * 0.5;
    let pu = (&id + &sign) * 0.5;
    // exponentiate S composed with the projector so the discarded modes never grow
    let out = if x >= 0.0 { (&s * &ps * x).exp() * ps * z } else { -(&s * &pu * x).exp() * pu * z };
    let mut c = DVector::zeros(dec.dims.n);
    c.rows_range_mut(dec.dims.v_tilde_range()).copy_from(&out);
    dec.from_coords(&c)
}

#[test]
fn green_function_against_matrix_exponential() {
    let (_, dec) = setup("gnl-rich");
    let v = v_tilde_vector(&dec, |k| 1.0 - 0.4 * k as f64);
    for x in [-4.0, -0.5, -1e-9, 0.0, 0.3, 2.0, 3.0 / dec.nu] {
        let a = green_apply(&dec, x, &v);
        let b = dense_green(&dec, x, &v);
        assert!((&a - &b).amax() < 1e-10 * v.amax(), "x = {x}");
    }
    // jump across zero is the identity on V~
    let jump = green_apply(&dec, 0.0, &v) - green_apply(&dec, -1e-300, &v);
    assert!((jump - &v).amax() < 1e-10);
    let far = green_apply(&dec, 3.0 / dec.nu, &v).norm();
    let cond = dec.s_vecs.norm() * dec.s_vecs_inv.norm();
    assert!(far <= (-3.0f64).exp() * cond * v.norm() * (1.0 + 1e-12));
}

#[test]
fn volterra_basic_identities() {
    let g = GridFunction::from_fn(5.0, 101, 2, |x| DVector::from_vec(vec![2.0, x * x])).unwrap();
    let v = apply_volterra(&g);
    for i in 0..101 {
        let x = g.x(i);
        assert!((v.row(i)[0] - 2.0 * x).abs() < 1e-12);
        assert!((v.row(i)[1] - x * x * x / 3.0).abs() < 1e-11);
    }
    assert_eq!(v.row(50), &[0.0, 0.0]);
}

#[test]
fn k0_of_zero_and_shift_equivariance() {
    let (m, dec) = setup("gnl-min");
    let l = 20.0 / dec.nu;
    let zero = GridFunction::zeros(l, 1025, m.dim).unwrap();
    assert_eq!(apply_k0(&dec, &zero).sup_norm(), 0.0);
    let dir = v_tilde_vector(&dec, |k| 1.0 + k as f64);
    let bump = |c: f64| GridFunction::from_fn(l, 1025, m.dim, |x| &dir * (-((x - c) * dec.nu).powi(2)).exp()).unwrap();
    let shift = 40;
    let h = zero.step();
    let a = apply_k0(&dec, &bump(0.0));
    let b = apply_k0(&dec, &bump(shift as f64 * h));
    let mut worst: f64 = 0.0;
    for i in 200..1025 - 200 - shift {
        worst = worst.max((a.value(i) - b.value(i + shift)).amax());
    }
    assert!(worst < 1e-12 * a.sup_norm().max(1.0), "{worst:e}");
}

#[test]
fn k_vanishes_on_zero_and_center_part_at_origin() {
    let (m, dec) = setup("gnl-rich");
    let l = 20.0 / dec.nu;
    let zero = GridFunction::zeros(l, 513, m.dim).unwrap();
    assert_eq!(apply_k(&dec, &zero).sup_norm(), 0.0);
    let vp = dec.v_projection();
    let f = GridFunction::from_fn(l, 513, m.dim, |x| {
        &vp * DVector::from_fn(m.dim, |i, _| ((i + 1) as f64 * 0.3 * x).cos() * (-(x * 0.5).powi(2)).exp())
    })
    .unwrap();
    let kf = apply_k(&dec, &f);
    let at0 = kf.value(kf.center());
    assert!((dec.center_projection() * at0).amax() < 1e-12);
}

#[test]
fn inhomogeneous_solution_properties() {
    let (m, dec) = setup("gnl-min");
    let l = 20.0 / dec.nu;
    let nodes = 2049;
    let w0 = center_vector(&dec, &[0.2, 0.1, -0.3]);
    // f = 0 reproduces the affine center flow
    let zero = GridFunction::zeros(l, nodes, m.dim).unwrap();
    let u = solve_inhomogeneous(&dec, &w0, &zero).unwrap();
    for i in (0..nodes).step_by(97) {
        let expected = linear_center_solution(&dec, &w0, u.x(i)).unwrap();
        assert!((u.value(i) - expected).amax() < 1e-12);
    }
    // decaying forcing in V
    let vp = dec.v_projection();
    let f = GridFunction::from_fn(l, nodes, m.dim, |x| {
        &vp * DVector::from_fn(m.dim, |i, _| (1.0 + 0.5 * i as f64) * (-(x / 3.0).powi(2)).exp() * (0.4 * x + i as f64).sin())
    })
    .unwrap();
    let u = solve_inhomogeneous(&dec, &w0, &f).unwrap();
    let res = linear_residual(&m, &u, &f);
    assert!(res.sup_norm_interior(0.5) < 1e-6, "{:e}", res.sup_norm_interior(0.5));
    let at0 = dec.center_projection() * u.value(u.center());
    assert!((at0 - &w0).amax() < 1e-9);
}
