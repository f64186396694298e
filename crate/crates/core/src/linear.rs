//! Block decomposition of the linearized operator, the exponential
//! trichotomy, the Green function of the hyperbolic block and the solution
//! operators of the inhomogeneous linear problem A u' = Q'(u_bar) u + f.
//!
//! Internally every vector is expressed in orthonormal block coordinates
//! ordered as `[ker A11 | im A11 | V1 | V~]`; the public API takes and returns
//! ambient vectors.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::model::{AdaptedFrame, KineticModel};
use crate::numerics::{column_basis, inverse, orth_complement, singular_values, sym_eigen_sorted, symmetrize};

/// Relative threshold for kernel decisions on A11.
pub const RANK_TOL: f64 = 1e-9;

/// Sizes of the coordinate blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BlockDims {
    pub n: usize,
    pub kernel: usize,
    pub ker_a11: usize,
    pub im_a11: usize,
    pub v1: usize,
    pub v_tilde: usize,
    pub center: usize,
    pub stable: usize,
    pub unstable: usize,
}

impl BlockDims {
    pub fn u1(&self) -> std::ops::Range<usize> {
        0..self.ker_a11
    }
    pub fn u_tilde(&self) -> std::ops::Range<usize> {
        self.ker_a11..self.kernel
    }
    pub fn v1_range(&self) -> std::ops::Range<usize> {
        self.kernel..self.kernel + self.v1
    }
    pub fn v_tilde_range(&self) -> std::ops::Range<usize> {
        self.kernel + self.v1..self.n
    }
}

/// All linear data derived from a model.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub dims: BlockDims,
    pub frame: AdaptedFrame,
    /// A and Q'(u_bar) in block coordinates.
    pub a_coords: DMatrix<f64>,
    pub dq_coords: DMatrix<f64>,
    /// Quadratic tensor B in block coordinates, layout k n^2 + i n + j.
    pub b_coords: Vec<f64>,
    pub a11_tilde: DMatrix<f64>,
    pub a11_tilde_inv: DMatrix<f64>,
    /// Image part of A12, columns over [V1 | V~].
    pub a12_tilde: DMatrix<f64>,
    /// Kernel part of A12 restricted to V1 (square).
    pub t12: DMatrix<f64>,
    /// Inverse of the adjoint of `t12`.
    pub t12_adj_inv: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    /// Q'(u_bar) on V, symmetric negative definite.
    pub e: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
    pub e0: DMatrix<f64>,
    pub gamma0_inv: DMatrix<f64>,
    pub e0_inv: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    /// Eigenvalues of Gamma0^{-1} E0, ascending, with eigenvectors.
    pub s_eigs: Vec<f64>,
    pub s_vecs: DMatrix<f64>,
    pub s_vecs_inv: DMatrix<f64>,
    pub nu: f64,
    pub nu_max: f64,
    pub delta: f64,
    pub gamma0_condition: f64,
    pub a_condition: f64,
    /// Projections in block coordinates.
    pub pc_coords: DMatrix<f64>,
    pub ps_coords: DMatrix<f64>,
    pub pu_coords: DMatrix<f64>,
    /// Maps a forcing in V to its kernel-block Volterra integrand.
    pub gamma3_coords: DMatrix<f64>,
    /// Embeds a V~ vector into the hyperbolic subspaces.
    pub gamma4_coords: DMatrix<f64>,
    /// Maps a center vector to the slope of its affine linear flow.
    pub slope_coords: DMatrix<f64>,
}

fn block(m: &DMatrix<f64>, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Builds the decomposition; the model must satisfy the hypotheses.
pub fn build_decomposition(model: &KineticModel) -> Result<Decomposition> {
    let report = crate::model::verify_hypotheses(model, crate::model::HYPOTHESIS_TOL);
    if !report.pass {
        let tags: Vec<String> = report.violations.iter().map(|v| format!("{:?}", v.tag)).collect();
        return Err(KmError::Hypothesis(tags.join(", ")));
    }
    let n = model.dim;
    let frame0 = AdaptedFrame::new(model)?;
    let p = frame0.p;
    let q = n - p;
    let a0 = symmetrize(&frame0.operator(&model.a));
    let anorm = singular_values(&a0)[0];

    // kernel of A11
    let a11 = block(&a0, 0..p, 0..p);
    let (vals, vecs) = sym_eigen_sorted(&a11);
    let tol = RANK_TOL * anorm;
    if vals.iter().any(|v| v.abs() > tol / 10.0 && v.abs() <= tol * 10.0) {
        return Err(KmError::AmbiguousRank(format!("A11 spectrum {vals:?} near threshold {tol:.3e}")));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by_key(|&i| (vals[i].abs() > tol) as u8);
    let r = order.iter().filter(|&&i| vals[i].abs() <= tol).count();
    let mut rot_perp = DMatrix::zeros(p, p);
    for (k, &i) in order.iter().enumerate() {
        rot_perp.set_column(k, &vecs.column(i));
    }

    // V1 = image of the adjoint of the kernel part of A12, V~ its complement in V
    let a12 = block(&a0, 0..p, p..n);
    let t12_full = rot_perp.columns(0, r).transpose() * &a12;
    let w1 = column_basis(&t12_full.transpose(), RANK_TOL);
    if w1.ncols() != r {
        return Err(KmError::AmbiguousRank("kernel part of A12 is not injective on its adjoint".into()));
    }
    let wt = orth_complement(&w1);
    let mut rot_comp = DMatrix::zeros(q, q);
    rot_comp.view_mut((0, 0), (q, r)).copy_from(&w1);
    rot_comp.view_mut((0, r), (q, q - r)).copy_from(&wt);
    let frame = frame0.rotated(&rot_perp, &rot_comp);

    let a_c = symmetrize(&frame.operator(&model.a));
    let dq_c = symmetrize(&frame.operator(&model.dq_matrix(&model.u_bar)));
    let s = q - r;
    let ru1 = 0..r;
    let rut = r..p;
    let rv1 = p..p + r;
    let rvt = p + r..n;

    let a11_tilde = block(&a_c, rut.clone(), rut.clone());
    let a11_tilde_inv = inverse(&a11_tilde)?;
    let a12_tilde = block(&a_c, rut.clone(), p..n);
    let a12_t1 = block(&a_c, rut.clone(), rv1.clone());
    let a12_tt = block(&a_c, rut.clone(), rvt.clone());
    let t12 = block(&a_c, ru1.clone(), rv1.clone());
    let t12_adj_inv = inverse(&t12.transpose())?;
    let a22 = block(&a_c, p..n, p..n);
    let a22_1t = block(&a_c, rv1.clone(), rvt.clone());
    let a22_tt = block(&a_c, rvt.clone(), rvt.clone());
    let e = block(&dq_c, p..n, p..n);
    let e11 = block(&dq_c, rv1.clone(), rv1.clone());
    let e1t = block(&dq_c, rv1.clone(), rvt.clone());
    let et1 = e1t.transpose();
    let e0 = block(&dq_c, rvt.clone(), rvt.clone());

    let gamma0 = symmetrize(&(&a22_tt - a12_tt.transpose() * &a11_tilde_inv * &a12_tt));
    let gamma0_inv = inverse(&gamma0)?;
    let e0_inv = inverse(&e0)?;
    let gamma1 = &t12_adj_inv * (a12_t1.transpose() * &a11_tilde_inv * &a12_tt - &a22_1t);
    let mut e1 = DMatrix::zeros(r, q);
    e1.view_mut((0, 0), (r, r)).copy_from(&(&t12_adj_inv * &e11));
    e1.view_mut((0, r), (r, s)).copy_from(&(&t12_adj_inv * &e1t));

    // spectrum of Gamma0^{-1} E0 through the symmetric pencil (Gamma0, -E0)
    let chol = (-&e0)
        .cholesky()
        .ok_or_else(|| KmError::Hypothesis("E0 is not negative definite".into()))?;
    let l = chol.l();
    let l_inv = inverse(&l)?;
    let pencil = symmetrize(&(&l_inv * &gamma0 * l_inv.transpose()));
    let (mu, y) = sym_eigen_sorted(&pencil);
    if mu.iter().any(|m| m.abs() < 1e-14) {
        return Err(KmError::Numeric("Gamma0 is singular".into()));
    }
    let mut modes: Vec<(f64, DVector<f64>)> = mu
        .iter()
        .enumerate()
        .map(|(i, m)| (-1.0 / m, l_inv.transpose() * y.column(i)))
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s_eigs: Vec<f64> = modes.iter().map(|m| m.0).collect();
    let mut s_vecs = DMatrix::zeros(s, s);
    for (k, m) in modes.iter().enumerate() {
        s_vecs.set_column(k, &m.1);
    }
    let s_vecs_inv = inverse(&s_vecs)?;
    let nu = s_eigs.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let nu_max = s_eigs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let n_stable = s_eigs.iter().filter(|&&v| v < 0.0).count();

    // hyperbolic embedding z -> ((Gamma1 + E1 E0^{-1} Gamma0) z, -A11~^{-1} A12~ z, 0, z)
    let m_u1 = &gamma1 + &t12_adj_inv * &e1t * &e0_inv * &gamma0;
    let m_ut = -(&a11_tilde_inv * &a12_tt);
    let mut gamma4 = DMatrix::zeros(n, n);
    gamma4.view_mut((0, p + r), (r, s)).copy_from(&m_u1);
    gamma4.view_mut((r, p + r), (p - r, s)).copy_from(&m_ut);
    gamma4.view_mut((p + r, p + r), (s, s)).copy_from(&DMatrix::identity(s, s));

    // z = v~ + E0^{-1} E21 v1 as a map of the full coordinate vector
    let mut z_of = DMatrix::zeros(s, n);
    z_of.view_mut((0, p + r), (s, s)).copy_from(&DMatrix::identity(s, s));
    z_of.view_mut((0, p), (s, r)).copy_from(&(&e0_inv * &et1));
    let hyp = &gamma4 * {
        let mut lift = DMatrix::zeros(n, s);
        lift.view_mut((p + r, 0), (s, s)).copy_from(&DMatrix::identity(s, s));
        lift
    };
    let p_hyp = &hyp * &z_of;
    let pc = DMatrix::identity(n, n) - &p_hyp;
    let mut sel_s = DMatrix::zeros(s, s);
    for i in 0..n_stable {
        sel_s[(i, i)] = 1.0;
    }
    let ps_tilde = &s_vecs * &sel_s * &s_vecs_inv;
    let pu_tilde = DMatrix::identity(s, s) - &ps_tilde;
    let ps = &hyp * &ps_tilde * &z_of;
    let pu = &hyp * &pu_tilde * &z_of;

    let mut gamma3 = DMatrix::zeros(n, n);
    gamma3.view_mut((0, p), (r, r)).copy_from(&t12_adj_inv);
    gamma3.view_mut((0, p + r), (r, s)).copy_from(&(-(&t12_adj_inv * &e1t * &e0_inv)));

    let slope = &t12_adj_inv * (&e11 - &e1t * &e0_inv * &et1);
    let mut slope_c = DMatrix::zeros(n, n);
    slope_c.view_mut((0, p), (r, r)).copy_from(&slope);

    let (evals, _) = sym_eigen_sorted(&e);
    let delta = -evals.last().cloned().unwrap_or(0.0);

    let dims = BlockDims {
        n,
        kernel: p,
        ker_a11: r,
        im_a11: p - r,
        v1: r,
        v_tilde: s,
        center: p + r,
        stable: n_stable,
        unstable: s - n_stable,
    };
    Ok(Decomposition {
        dims,
        gamma0_condition: condition(&gamma0),
        a_condition: condition(&a_c),
        b_coords: frame.tensor(model),
        frame,
        a_coords: a_c,
        dq_coords: dq_c,
        a11_tilde,
        a11_tilde_inv,
        a12_tilde,
        t12,
        t12_adj_inv,
        a22,
        e,
        gamma0,
        e0,
        gamma0_inv,
        e0_inv,
        gamma1,
        e1,
        s_eigs,
        s_vecs,
        s_vecs_inv,
        nu,
        nu_max,
        delta,
        pc_coords: pc,
        ps_coords: ps,
        pu_coords: pu,
        gamma3_coords: gamma3,
        gamma4_coords: gamma4,
        slope_coords: slope_c,
    })
}

impl Decomposition {
    pub fn to_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.frame.to_coords * x
    }

    pub fn from_coords(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.frame.from_coords * c
    }

    /// Ambient matrix of an operator given in block coordinates.
    pub fn ambient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.frame.from_coords * m * &self.frame.to_coords
    }

    pub fn center_projection(&self) -> DMatrix<f64> {
        self.ambient(&self.pc_coords)
    }

    pub fn stable_projection(&self) -> DMatrix<f64> {
        self.ambient(&self.ps_coords)
    }

    pub fn unstable_projection(&self) -> DMatrix<f64> {
        self.ambient(&self.pu_coords)
    }

    /// Gram-orthogonal projection onto V~.
    pub fn v_tilde_projection(&self) -> DMatrix<f64> {
        let mut sel = DMatrix::zeros(self.dims.n, self.dims.n);
        for i in self.dims.v_tilde_range() {
            sel[(i, i)] = 1.0;
        }
        self.ambient(&sel)
    }

    /// Gram-orthogonal projection onto the complement V of the kernel.
    pub fn v_projection(&self) -> DMatrix<f64> {
        let mut sel = DMatrix::zeros(self.dims.n, self.dims.n);
        for i in self.dims.kernel..self.dims.n {
            sel[(i, i)] = 1.0;
        }
        self.ambient(&sel)
    }

    /// Ambient basis of the center subspace.
    pub fn center_basis(&self) -> DMatrix<f64> {
        column_basis(&self.center_projection(), 1e-8)
    }

    /// Operator norm of (2 pi i omega Gamma0 - E0)^{-1}.
    pub fn resolvent_norm(&self, omega: f64) -> f64 {
        let s = self.dims.v_tilde;
        if s == 0 {
            return 0.0;
        }
        let m = DMatrix::from_fn(s, s, |i, j| {
            Complex::new(-self.e0[(i, j)], 2.0 * std::f64::consts::PI * omega * self.gamma0[(i, j)])
        });
        let sv = m.singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        1.0 / smin
    }

    /// Multiplier (2 pi i omega Gamma0 - E0)^{-1} in V~ coordinates.
    pub fn resolvent(&self, omega: f64) -> Option<DMatrix<Complex<f64>>> {
        let s = self.dims.v_tilde;
        let m = DMatrix::from_fn(s, s, |i, j| {
            Complex::new(-self.e0[(i, j)], 2.0 * std::f64::consts::PI * omega * self.gamma0[(i, j)])
        });
        m.try_inverse()
    }

    fn check_center(&self, w0: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.to_coords(w0);
        let res = (&self.pc_coords * &c - &c).norm();
        if res > 1e-8 * c.norm().max(1e-300) && res > 1e-14 {
            return Err(KmError::NotCenter(res));
        }
        Ok(c)
    }
}

/// Splits w into its center, stable and unstable parts.
pub fn trichotomy_project(dec: &Decomposition, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let c = dec.to_coords(w);
    (
        dec.from_coords(&(&dec.pc_coords * &c)),
        dec.from_coords(&(&dec.ps_coords * &c)),
        dec.from_coords(&(&dec.pu_coords * &c)),
    )
}

/// Affine solution of the homogeneous linear problem through a center vector.
pub fn linear_center_solution(dec: &Decomposition, w0: &DVector<f64>, x: f64) -> Result<DVector<f64>> {
    let c = dec.check_center(w0)?;
    Ok(dec.from_coords(&(&c + &dec.slope_coords * &c * x)))
}

/// Green function of the hyperbolic block applied to a V~ vector.
pub fn green_apply(dec: &Decomposition, x: f64, v: &DVector<f64>) -> DVector<f64> {
    let z = dec.to_coords(v).rows_range(dec.dims.v_tilde_range()).into_owned();
    let zc = &dec.s_vecs_inv * z;
    let weighted = DVector::from_fn(zc.len(), |i, _| {
        let lam = dec.s_eigs[i];
        if x >= 0.0 && lam < 0.0 {
            (lam * x).exp() * zc[i]
        } else if x < 0.0 && lam > 0.0 {
            -(lam * x).exp() * zc[i]
        } else {
            0.0
        }
    });
    let out = &dec.s_vecs * weighted;
    let mut c = DVector::zeros(dec.dims.n);
    c.rows_range_mut(dec.dims.v_tilde_range()).copy_from(&out);
    dec.from_coords(&c)
}

/// phi_k(z) = sum_i z^i / (i + k)! for k = 0..=4.
fn phi_functions(z: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    if z.abs() < 1.0 {
        for (k, slot) in out.iter_mut().enumerate() {
            let mut term = 1.0;
            for j in 1..=k {
                term /= j as f64;
            }
            let mut sum: f64 = 0.0;
            let mut i = 0;
            while term.abs() > 1e-18 * sum.abs().max(1e-300) || i < 3 {
                sum += term;
                i += 1;
                term *= z / (i + k) as f64;
                if i > 60 {
                    break;
                }
            }
            *slot = sum;
        }
    } else {
        out[0] = z.exp();
        let mut fact = 1.0;
        for k in 0..4 {
            out[k + 1] = (out[k] - 1.0 / fact) / z;
            fact *= (k + 1) as f64;
        }
    }
    out
}

/// Quadrature weights for integrals of exp(kappa (h - s)) g(x_k + s) over one
/// step, with g replaced by its cubic interpolant on four neighbouring nodes.
#[derive(Debug, Clone)]
struct StepWeights {
    decay: f64,
    // [first, middle, last] stencils
    w: [[f64; 4]; 3],
}

fn lagrange_coeffs(nodes: &[f64; 4], i: usize) -> [f64; 4] {
    // coefficients of prod_{j != i} (t - t_j) / (t_i - t_j) in the monomial basis
    let mut poly = [1.0, 0.0, 0.0, 0.0];
    let mut deg = 0;
    let mut denom = 1.0;
    for (j, &tj) in nodes.iter().enumerate() {
        if j == i {
            continue;
        }
        let mut next = [0.0; 4];
        for d in 0..=deg {
            next[d + 1] += poly[d];
            next[d] -= tj * poly[d];
        }
        poly = next;
        deg += 1;
        denom *= nodes[i] - tj;
    }
    poly.map(|c| c / denom)
}

impl StepWeights {
    fn new(kappa: f64, h: f64) -> Self {
        let mu = kappa * h;
        let phi = phi_functions(mu);
        // moments int_0^1 exp(mu (1 - t)) t^d dt = d! phi_{d+1}(mu)
        let moments = [phi[1], phi[2], 2.0 * phi[3], 6.0 * phi[4]];
        let mut w = [[0.0; 4]; 3];
        for (case, offset) in [0.0, 1.0, 2.0].iter().enumerate() {
            let nodes = [-offset, 1.0 - offset, 2.0 - offset, 3.0 - offset];
            for i in 0..4 {
                let c = lagrange_coeffs(&nodes, i);
                w[case][i] = h * (0..4).map(|d| c[d] * moments[d]).sum::<f64>();
            }
        }
        StepWeights { decay: mu.exp(), w }
    }
}

/// Solves phi' = kappa phi + g forward from the left edge on uniform samples,
/// with kappa <= 0 and `start` the value at the first node.
fn march(kappa: f64, h: f64, g: &[f64], start: f64, out: &mut [f64]) {
    let m = g.len();
    let sw = StepWeights::new(kappa, h);
    out[0] = start;
    for k in 0..m - 1 {
        let (case, base) = if k == 0 {
            (0, 0)
        } else if k + 2 >= m {
            (2, m - 4)
        } else {
            (1, k - 1)
        };
        let wts = &sw.w[case];
        let inc = wts[0] * g[base] + wts[1] * g[base + 1] + wts[2] * g[base + 2] + wts[3] * g[base + 3];
        out[k + 1] = sw.decay * out[k] + inc;
    }
}

/// Whole-line convolution of one hyperbolic mode with eigenvalue `lam`,
/// extending g by its edge values beyond the grid.
fn mode_convolution(lam: f64, h: f64, g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let mut out = vec![0.0; m];
    if lam < 0.0 {
        march(lam, h, g, -g[0] / lam, &mut out);
    } else {
        let rev: Vec<f64> = g.iter().rev().cloned().collect();
        let mut tmp = vec![0.0; m];
        march(-lam, h, &rev, rev[0] / lam, &mut tmp);
        for i in 0..m {
            out[i] = -tmp[m - 1 - i];
        }
    }
    out
}

/// Cumulative integral from x = 0 of scalar samples.
fn volterra_scalar(h: f64, g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let c = (m - 1) / 2;
    let mut out = vec![0.0; m];
    let right = &g[c..];
    if right.len() >= 4 {
        let mut tmp = vec![0.0; right.len()];
        march_with_context(h, g, c, &mut tmp, 1);
        out[c..].copy_from_slice(&tmp);
        let mut tmpl = vec![0.0; c + 1];
        march_with_context(h, g, c, &mut tmpl, -1);
        for (i, v) in tmpl.iter().enumerate() {
            out[c - i] = *v;
        }
    } else {
        // short grids: trapezoid
        for i in c + 1..m {
            out[i] = out[i - 1] + 0.5 * h * (g[i] + g[i - 1]);
        }
        for i in (0..c).rev() {
            out[i] = out[i + 1] - 0.5 * h * (g[i] + g[i + 1]);
        }
    }
    out
}

/// Integrates from the center node outward in direction `dir`, using cubic
/// stencils that may reach across the center.
fn march_with_context(h: f64, g: &[f64], c: usize, out: &mut [f64], dir: isize) {
    let m = g.len() as isize;
    let sw = StepWeights::new(0.0, h);
    let at = |i: isize| g[i as usize];
    out[0] = 0.0;
    for k in 0..out.len() - 1 {
        // interval between nodes a = c + dir k and b = c + dir (k + 1)
        let a = c as isize + dir * k as isize;
        // stencil in the marching direction: a - dir, a, a + dir, a + 2 dir
        let (case, s0) = if a - dir < 0 || a - dir >= m {
            (0, a)
        } else if a + 2 * dir < 0 || a + 2 * dir >= m {
            (2, a - 2 * dir)
        } else {
            (1, a - dir)
        };
        let wts = &sw.w[case];
        let inc: f64 = (0..4).map(|j| wts[j] * at(s0 + dir * j as isize)).sum();
        out[k + 1] = out[k] + dir as f64 * inc;
    }
}

/// K0 applied in V~ coordinates: samples `g` (m x s, row-major).
fn k0_tilde(dec: &Decomposition, h: f64, m: usize, g: &[f64]) -> Vec<f64> {
    let s = dec.dims.v_tilde;
    if s == 0 {
        return Vec::new();
    }
    let map = &dec.s_vecs_inv * &dec.gamma0_inv;
    let mut modes = vec![vec![0.0; m]; s];
    for i in 0..m {
        let row = &g[i * s..(i + 1) * s];
        for (j, mode) in modes.iter_mut().enumerate() {
            mode[i] = (0..s).map(|k| map[(j, k)] * row[k]).sum();
        }
    }
    let conv: Vec<Vec<f64>> = modes
        .iter()
        .enumerate()
        .map(|(j, gm)| mode_convolution(dec.s_eigs[j], h, gm))
        .collect();
    let mut out = vec![0.0; m * s];
    for i in 0..m {
        for r in 0..s {
            out[i * s + r] = (0..s).map(|j| dec.s_vecs[(r, j)] * conv[j][i]).sum();
        }
    }
    out
}

impl Decomposition {
    /// K0 on a grid in block coordinates; only V~ components are read and
    /// the result has only V~ components.
    pub fn k0_coords(&self, g: &GridFunction) -> GridFunction {
        let n = self.dims.n;
        let m = g.nodes();
        let range = self.dims.v_tilde_range();
        let s = range.len();
        let mut gt = vec![0.0; m * s];
        for i in 0..m {
            gt[i * s..(i + 1) * s].copy_from_slice(&g.row(i)[range.clone()]);
        }
        let res = k0_tilde(self, g.step(), m, &gt);
        let mut out = GridFunction::zeros(g.half_width(), m, n).expect("valid grid");
        for i in 0..m {
            out.row_mut(i)[range.clone()].copy_from_slice(&res[i * s..(i + 1) * s]);
        }
        out
    }

    /// K f = V(Gamma3 f) + Gamma4 K0(P_V~ f) in block coordinates.
    pub fn k_coords(&self, f: &GridFunction) -> GridFunction {
        let n = self.dims.n;
        let m = f.nodes();
        let h = f.step();
        let mut out = self.k0_coords(f).map_linear(&self.gamma4_coords);
        let r = self.dims.ker_a11;
        if r > 0 {
            let g3 = f.map_linear(&self.gamma3_coords);
            for comp in 0..r {
                let samples: Vec<f64> = (0..m).map(|i| g3.row(i)[comp]).collect();
                let integ = volterra_scalar(h, &samples);
                for i in 0..m {
                    out.row_mut(i)[comp] += integ[i];
                }
            }
        }
        debug_assert_eq!(out.dim(), n);
        out
    }

    /// w0 + x * slope(w0) on the grid, block coordinates.
    pub fn center_flow_coords(&self, w0c: &DVector<f64>, half_width: f64, nodes: usize) -> GridFunction {
        let slope = &self.slope_coords * w0c;
        GridFunction::from_fn(half_width, nodes, self.dims.n, |x| w0c + &slope * x).expect("valid grid")
    }

    pub fn grid_to_coords(&self, g: &GridFunction) -> GridFunction {
        g.map_linear(&self.frame.to_coords)
    }

    pub fn grid_from_coords(&self, g: &GridFunction) -> GridFunction {
        g.map_linear(&self.frame.from_coords)
    }
}

/// K0 applied to ambient samples with values in V~.
pub fn apply_k0(dec: &Decomposition, g: &GridFunction) -> GridFunction {
    dec.grid_from_coords(&dec.k0_coords(&dec.grid_to_coords(g)))
}

/// (V g)(x) = integral of g from 0 to x, componentwise.
pub fn apply_volterra(g: &GridFunction) -> GridFunction {
    let m = g.nodes();
    let mut out = GridFunction::zeros(g.half_width(), m, g.dim()).expect("valid grid");
    for comp in 0..g.dim() {
        let samples: Vec<f64> = (0..m).map(|i| g.row(i)[comp]).collect();
        let integ = volterra_scalar(g.step(), &samples);
        for i in 0..m {
            out.row_mut(i)[comp] = integ[i];
        }
    }
    out
}

/// K f for ambient samples with values in V.
pub fn apply_k(dec: &Decomposition, f: &GridFunction) -> GridFunction {
    dec.grid_from_coords(&dec.k_coords(&dec.grid_to_coords(f)))
}

/// Solution u = w0 + f_c(., P_V1 w0) + K f of A u' = Q'(u_bar) u + f.
pub fn solve_inhomogeneous(dec: &Decomposition, w0: &DVector<f64>, f: &GridFunction) -> Result<GridFunction> {
    let c = dec.check_center(w0)?;
    let base = dec.center_flow_coords(&c, f.half_width(), f.nodes());
    let u = base.add(&dec.k_coords(&dec.grid_to_coords(f)));
    Ok(dec.grid_from_coords(&u))
}

/// Residual A u' - Q'(u_bar) u - f on the grid, ambient coordinates.
pub fn linear_residual(model: &KineticModel, u: &GridFunction, f: &GridFunction) -> GridFunction {
    let du = crate::weighted::derivative(u);
    let dq = model.dq_matrix(&model.u_bar);
    let a = &model.a;
    let n = model.dim;
    let mut out = GridFunction::zeros(u.half_width(), u.nodes(), n).expect("valid grid");
    for i in 0..u.nodes() {
        let r = a * du.value(i) - &dq * u.value(i) - f.value(i);
        out.row_mut(i).copy_from_slice(r.as_slice());
    }
    out
}
