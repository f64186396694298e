//! Brute-force references for tests: the spectral trichotomy of the pencil
//! (Q'(u_bar), A) computed without the block decomposition, and the full
//! steady system solved as a boundary value problem.

use nalgebra::{Complex, DMatrix, DVector};

use crate::bvp::{solve_heteroclinic, BvpReport, HeteroclinicProblem, NodeCondition};
use crate::chapman::{classify, rankine_hugoniot, ChapmanEnskog, CLASSIFY_TOL};
use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::linear::build_decomposition;
use crate::model::KineticModel;
use crate::numerics::{column_basis, inverse, matrix_sign, null_space, row_basis};
use crate::profiles::ProfileConfig;

pub use crate::numerics::fd_jacobian;

/// Spectral projections of A^{-1} Q'(u_bar), all in ambient coordinates.
#[derive(Debug, Clone)]
pub struct PencilTrichotomy {
    pub eigenvalues: Vec<Complex<f64>>,
    pub pc: DMatrix<f64>,
    pub ps: DMatrix<f64>,
    pub pu: DMatrix<f64>,
    pub center: DMatrix<f64>,
    pub stable: DMatrix<f64>,
    pub unstable: DMatrix<f64>,
    /// dim ker M^j for j = 1, 2, 3.
    pub kernel_dims: [usize; 3],
}

const SAMPLES: usize = 64;

/// Center projection by a trapezoid contour integral of the resolvent on a
/// circle that separates zero from the rest of the spectrum; stable and
/// unstable parts from the sign function of the shifted generator.
pub fn pencil_trichotomy(model: &KineticModel) -> Result<PencilTrichotomy> {
    let n = model.dim;
    let a_inv = inverse(&model.a).map_err(|_| KmError::Hypothesis("A is singular".into()))?;
    let m = &a_inv * model.dq_matrix(&model.u_bar);
    let eigenvalues: Vec<Complex<f64>> = m.complex_eigenvalues().iter().cloned().collect();
    let scale = m.norm().max(1.0);
    let zero_tol = 1e-7 * scale;
    let nu_min = eigenvalues
        .iter()
        .map(|z| z.norm())
        .filter(|&r| r > zero_tol)
        .fold(f64::INFINITY, f64::min);
    if !nu_min.is_finite() {
        return Err(KmError::InvalidModel("generator is nilpotent".into()));
    }
    let radius = nu_min / 3.0;
    let mc: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
    let mut acc: DMatrix<Complex<f64>> = DMatrix::zeros(n, n);
    for j in 0..SAMPLES {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / SAMPLES as f64;
        let z = Complex::from_polar(radius, theta);
        let shifted = DMatrix::from_diagonal_element(n, n, z) - &mc;
        let res = shifted
            .lu()
            .try_inverse()
            .ok_or_else(|| KmError::Numeric("contour passes through the spectrum".into()))?;
        acc += res * z;
    }
    let pc = (acc / Complex::new(SAMPLES as f64, 0.0)).map(|z| z.re);
    let s = matrix_sign(&(&m + &pc * nu_min))?;
    let id = DMatrix::<f64>::identity(n, n);
    let ps = (&id - &s) * 0.5;
    let pu = (&id + &s) * 0.5 - &pc;
    let tol = 1e-8;
    let m2 = &m * &m;
    let m3 = &m2 * &m;
    let kernel_dims = [null_space(&m, tol).ncols(), null_space(&m2, tol).ncols(), null_space(&m3, tol).ncols()];
    if kernel_dims[2] != kernel_dims[1] {
        return Err(KmError::InvalidModel(format!(
            "zero eigenvalue has chains longer than two: kernel dims {kernel_dims:?}"
        )));
    }
    Ok(PencilTrichotomy {
        eigenvalues,
        center: column_basis(&pc, 1e-8),
        stable: column_basis(&ps, 1e-8),
        unstable: column_basis(&pu, 1e-8),
        pc,
        ps,
        pu,
        kernel_dims,
    })
}

/// Options for [`bvp_full_shoot`]; the grid follows the profile rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullBvpConfig {
    pub profile: ProfileConfig,
}

/// Solves A w' = Q(u_bar + w) on [-L, L] with
/// - stable-projection rows at -L and unstable-projection rows at +L,
/// - the conserved quantities fixed at the flux level,
/// - the r_bar amplitude at x = 0 pinned to the midpoint of the endstates.
///
/// Returns the deviation from u_bar in ambient coordinates.
pub fn bvp_full_shoot(model: &KineticModel, eps: f64, cfg: &FullBvpConfig) -> Result<(GridFunction, BvpReport)> {
    let n = model.dim;
    let dec = build_decomposition(model)?;
    let cls = classify(model, &dec, CLASSIFY_TOL)?;
    let rh = rankine_hugoniot(model, &dec, &cls, eps)?;
    let l = cfg.profile.half_width_for(eps.max(1e-12), cls.lambda, cls.kappa_scalar());
    if eps == 0.0 {
        let g = GridFunction::zeros(l, cfg.profile.nodes, n)?;
        return Ok((g, BvpReport { iterations: 0, residual: 0.0 }));
    }
    let tri = pencil_trichotomy(model)?;
    let ce = ChapmanEnskog::new(model, &dec);
    let lift = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let v = ce.equilibrium_graph(u)?;
        Ok(dec.from_coords(&ce.stack(u, &v)))
    };
    let w_minus = lift(&rh.u_minus)?;
    let w_plus = lift(&rh.u_plus)?;
    // conserved quantities <k, A w> for k spanning the orthogonal complement of V
    let perp = DMatrix::from_columns(&model.v_perp_basis);
    let cons = perp.transpose() * &model.gram * &model.a;
    let r = &cls.r_bar;
    let rg = &model.gram * r;
    let mid = 0.5 * (rg.dot(&w_minus) + rg.dot(&w_plus)) / rg.dot(r);
    let field = |w: &DVector<f64>| model.bilinear(&(&model.u_bar + w), &(&model.u_bar + w));
    let jac = |w: &DVector<f64>| model.dq_matrix(&(&model.u_bar + w));
    let problem = HeteroclinicProblem {
        mass: model.a.clone(),
        field: &field,
        jacobian: &jac,
        left: NodeCondition { rows: row_basis(&tri.ps, 1e-8), target: w_minus.clone() },
        right: NodeCondition { rows: row_basis(&tri.pu, 1e-8), target: w_plus.clone() },
        constraints: NodeCondition { rows: cons, target: w_minus.clone() },
        phase: NodeCondition { rows: DMatrix::from_row_slice(1, n, rg.as_slice()), target: r * mid },
    };
    let weight = |x: f64| 0.5 * (1.0 - (cls.lambda.abs() * eps * x / (2.0 * cls.kappa_scalar())).tanh());
    let guess = GridFunction::from_fn(l, cfg.profile.nodes, n, |x| {
        let u = &rh.u_plus + (&rh.u_minus - &rh.u_plus) * weight(x);
        lift(&u).unwrap_or_else(|_| &w_plus + (&w_minus - &w_plus) * weight(x))
    })?;
    solve_heteroclinic(&problem, &guess)
}
