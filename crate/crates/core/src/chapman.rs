//! Equilibrium manifold as a graph over the kernel, the reduced flux and
//! viscosity, and the classification of the characteristic field at u_bar.
//!
//! Kernel states `u` and complement states `v` are coordinate vectors in the
//! adapted frame of the decomposition; `to_ambient` lifts them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{KmError, Result};
use crate::linear::Decomposition;
use crate::model::{bilinear, KineticModel};
use crate::numerics::{inverse, sym_eigen_sorted, symmetrize};

/// Default tolerance for classification decisions.
pub const CLASSIFY_TOL: f64 = 1e-8;

/// Reduced data attached to a decomposition.
#[derive(Debug, Clone)]
pub struct ChapmanEnskog<'a> {
    pub dec: &'a Decomposition,
    /// Newton basin radius for the equilibrium graph.
    pub radius: f64,
}

impl<'a> ChapmanEnskog<'a> {
    pub fn new(model: &KineticModel, dec: &'a Decomposition) -> Self {
        ChapmanEnskog { dec, radius: 0.1 * model.norm(&model.u_bar) + 0.1 }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    fn p(&self) -> usize {
        self.dec.dims.kernel
    }

    fn n(&self) -> usize {
        self.dec.dims.n
    }

    /// Stacks (u, v) into a coordinate deviation from u_bar.
    pub fn stack(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut c = DVector::zeros(self.n());
        c.rows_mut(0, self.p()).copy_from(u);
        c.rows_mut(self.p(), self.n() - self.p()).copy_from(v);
        c
    }

    /// Ambient state u_bar + (u, v).
    pub fn to_ambient(&self, model: &KineticModel, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &model.u_bar + self.dec.from_coords(&self.stack(u, v))
    }

    /// Q(u_bar + c) - Q(u_bar) in coordinates.
    pub fn collision(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.dec.dq_coords * c + bilinear(&self.dec.b_coords, self.n(), c.as_slice(), c.as_slice())
    }

    fn collision_jacobian(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let b = &self.dec.b_coords;
        let mut j = self.dec.dq_coords.clone();
        for k in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += b[k * n * n + i * n + l] * c[l];
                }
                j[(k, i)] += 2.0 * acc;
            }
        }
        j
    }

    /// v*(u): the complement part of the equilibrium above u.
    pub fn equilibrium_graph(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.p();
        let n = self.n();
        let q = n - p;
        if u.norm() > self.radius {
            return Err(KmError::Newton(format!("|u| = {:.3e} outside basin radius {:.3e}", u.norm(), self.radius)));
        }
        let mut v = DVector::zeros(q);
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let c = self.stack(u, &v);
            let res = self.collision(&c).rows(p, q).into_owned();
            let jac = self.collision_jacobian(&c).view((p, p), (q, q)).into_owned();
            let step = jac
                .lu()
                .solve(&res)
                .ok_or_else(|| KmError::Newton("singular Jacobian in equilibrium graph".into()))?;
            v -= &step;
            let s = step.norm();
            if !s.is_finite() || v.norm() > 10.0 * self.radius {
                return Err(KmError::Newton("equilibrium graph Newton diverged".into()));
            }
            if s <= 1e-16 * v.norm() || s == 0.0 || (s >= last && s < 1e-13 * (1.0 + v.norm())) {
                break;
            }
            last = s;
        }
        let res = self.collision(&self.stack(u, &v)).rows(p, q).norm();
        if res > 1e-12 {
            return Err(KmError::Newton(format!("equilibrium graph residual {res:.3e}")));
        }
        Ok(v)
    }

    /// f*(u) = A11 u + A12 v*(u), shifted so f*(0) = 0.
    pub fn flux(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let v = self.equilibrium_graph(u)?;
        let c = self.stack(u, &v);
        Ok((&self.dec.a_coords * c).rows(0, self.p()).into_owned())
    }

    /// D* = -A12 E^{-1} A12^T.
    pub fn viscosity(&self) -> DMatrix<f64> {
        let p = self.p();
        let n = self.n();
        let a12 = self.dec.a_coords.view((0, p), (p, n - p)).into_owned();
        let e_inv = inverse(&self.dec.e).expect("E is definite");
        symmetrize(&(-(&a12 * e_inv * a12.transpose())))
    }

    /// f*'(0) = A11 + A12 dv*/du, with dv*/du from implicit differentiation.
    pub fn flux_jacobian(&self) -> DMatrix<f64> {
        self.jacobian_from(&self.dec.dq_coords)
    }

    /// f*'(u) at a kernel state inside the basin.
    pub fn flux_jacobian_at(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let v = self.equilibrium_graph(u)?;
        Ok(self.jacobian_from(&self.collision_jacobian(&self.stack(u, &v))))
    }

    fn jacobian_from(&self, jac: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.p();
        let q = self.n() - p;
        let a = &self.dec.a_coords;
        let jvv = jac.view((p, p), (q, q)).into_owned();
        let dv = -(jvv.lu().solve(&jac.view((p, 0), (q, p)).into_owned()).expect("complement block is definite"));
        a.view((0, 0), (p, p)).into_owned() + a.view((0, p), (p, q)) * dv
    }

    /// Eigenvalue of f*'(u) closest to zero.
    pub fn characteristic_speed(&self, u: &DVector<f64>) -> Result<f64> {
        let jac = self.flux_jacobian_at(u)?;
        let eigs = jac.complex_eigenvalues();
        Ok(eigs.iter().min_by(|a, b| a.norm().total_cmp(&b.norm())).map(|z| z.re).unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    Noncharacteristic,
    SimpleGnl,
    LinearlyDegenerate(usize),
    Unclassified,
}

impl CaseTag {
    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::Noncharacteristic => "noncharacteristic",
            CaseTag::SimpleGnl => "simple_gnl",
            CaseTag::LinearlyDegenerate(_) => "linearly_degenerate",
            CaseTag::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub case: CaseTag,
    pub m: usize,
    /// Kernel direction of the flux Jacobian, frame coordinates (length p).
    pub r_bar_coords: DVector<f64>,
    /// Same direction in ambient coordinates.
    pub r_bar: DVector<f64>,
    pub lambda: f64,
    /// m x m, row-major.
    pub kappa: Vec<f64>,
    pub eigs: Vec<f64>,
    pub diagnostics: String,
}

#[derive(Serialize)]
struct ClassificationJson<'a> {
    case: &'a str,
    m: usize,
    lambda: f64,
    kappa: &'a [f64],
    r_bar: Vec<f64>,
    eigs: &'a [f64],
}

impl Classification {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ClassificationJson {
            case: self.case.label(),
            m: self.m,
            lambda: self.lambda,
            kappa: &self.kappa,
            r_bar: self.r_bar.iter().cloned().collect(),
            eigs: &self.eigs,
        })
        .expect("serializable")
    }

    pub fn kappa_scalar(&self) -> f64 {
        self.kappa.first().cloned().unwrap_or(0.0)
    }
}

/// Flips sign so the entry of largest magnitude is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
}

/// Richardson-extrapolated r . f*''(0)(r, r).
pub fn second_derivative_along(ce: &ChapmanEnskog, r: &DVector<f64>) -> Result<f64> {
    let d = |h: f64| -> Result<f64> {
        let plus = ce.flux(&(r * h))?;
        let minus = ce.flux(&(r * -h))?;
        Ok(r.dot(&(plus + minus)) / (h * h))
    };
    let coarse = d(1e-3)?;
    let fine = d(5e-4)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

pub fn classify(model: &KineticModel, dec: &Decomposition, tol: f64) -> Result<Classification> {
    let ce = ChapmanEnskog::new(model, dec);
    let p = dec.dims.kernel;
    let jac = symmetrize(&ce.flux_jacobian());
    let (eigs, vecs) = sym_eigen_sorted(&jac);
    let scale = eigs.iter().map(|e| e.abs()).fold(0.0, f64::max).max(dec.a_coords.amax());
    let kernel: Vec<usize> = (0..p).filter(|&i| eigs[i].abs() <= crate::linear::RANK_TOL * scale).collect();
    let m = kernel.len();
    let lift = |u: &DVector<f64>| {
        let mut c = DVector::zeros(dec.dims.n);
        c.rows_mut(0, p).copy_from(u);
        dec.from_coords(&c)
    };
    if m == 0 {
        return Ok(Classification {
            case: CaseTag::Noncharacteristic,
            m: 0,
            r_bar_coords: DVector::zeros(0),
            r_bar: DVector::zeros(0),
            lambda: 0.0,
            kappa: vec![],
            eigs,
            diagnostics: String::new(),
        });
    }
    let d = ce.viscosity();
    let mut basis = DMatrix::zeros(p, m);
    for (k, &i) in kernel.iter().enumerate() {
        let mut col = vecs.column(i).into_owned();
        fix_sign(&mut col);
        basis.set_column(k, &col);
    }
    let kappa_m = basis.transpose() * &d * &basis;
    let kappa: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| kappa_m[(i, j)]).collect();
    if kappa_m.clone().cholesky().is_none() {
        return Err(KmError::Numeric("kappa is not positive definite".into()));
    }
    let r = basis.column(0).into_owned();
    let lambda = if m == 1 { second_derivative_along(&ce, &r)? } else { 0.0 };
    let mut diagnostics = String::new();
    let case = if m == 1 && lambda.abs() >= 10.0 * tol {
        CaseTag::SimpleGnl
    } else if m > 1 || lambda.abs() <= tol / 10.0 {
        let terms = crate::manifold::kernel_fiber_terms(model, dec)?;
        if terms <= tol {
            CaseTag::LinearlyDegenerate(m)
        } else {
            diagnostics = format!("kernel fiber terms {terms:.3e} above tolerance");
            CaseTag::Unclassified
        }
    } else {
        diagnostics = format!("|Lambda| = {:.3e} within a decade of tolerance {tol:.1e}", lambda.abs());
        CaseTag::Unclassified
    };
    Ok(Classification { case, m, r_bar: lift(&r), r_bar_coords: r, lambda, kappa, eigs, diagnostics })
}

/// Endstates of a standing shock with amplitude `eps` on the kernel fiber.
#[derive(Debug, Clone)]
pub struct ShockData {
    pub eps: f64,
    /// Kernel coordinates of the left and right endstates.
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
    /// Flux level, kernel coordinates.
    pub q: DVector<f64>,
}

impl ShockData {
    /// Coordinate of an endstate along r_bar.
    pub fn amplitude(cls: &Classification, u: &DVector<f64>) -> f64 {
        cls.r_bar_coords.dot(u)
    }
}

/// Solves f*(u) = q with q = (Lambda eps^2 / 2) r_bar; the left endstate
/// sits near sign(Lambda) eps r_bar, the right one near the opposite point.
pub fn rankine_hugoniot(model: &KineticModel, dec: &Decomposition, cls: &Classification, eps: f64) -> Result<ShockData> {
    if cls.case != CaseTag::SimpleGnl {
        return Err(KmError::InvalidModel("Rankine-Hugoniot data needs a simple genuinely nonlinear field".into()));
    }
    let ce = ChapmanEnskog::new(model, dec);
    let r = &cls.r_bar_coords;
    let q = r * (0.5 * cls.lambda * eps * eps);
    if eps == 0.0 {
        let z = DVector::zeros(r.len());
        return Ok(ShockData { eps, u_minus: z.clone(), u_plus: z, q });
    }
    let sign = cls.lambda.signum();
    let solve = |guess: DVector<f64>, q: &DVector<f64>, eps: f64| -> Result<DVector<f64>> {
        let mut u = guess;
        for _ in 0..60 {
            let f = ce.flux(&u)? - q;
            let jac = ce.flux_jacobian_at(&u)?;
            let step = jac.lu().solve(&f).ok_or_else(|| KmError::Newton("singular flux Jacobian".into()))?;
            // backtrack until the residual drops and the trial stays in the basin
            let fnorm = f.norm();
            let mut t = 1.0;
            loop {
                let trial = &u - &step * t;
                if let Ok(ft) = ce.flux(&trial) {
                    if (ft - q).norm() < fnorm || t < 1e-3 {
                        u = trial;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-6 {
                    return Err(KmError::Newton("Rankine-Hugoniot line search failed".into()));
                }
            }
            if t == 1.0 && step.norm() <= 1e-15 * u.norm().max(eps) {
                break;
            }
        }
        let res = (ce.flux(&u)? - q).norm();
        if res > 1e-12 * (1.0 + eps) {
            return Err(KmError::Newton(format!("Rankine-Hugoniot residual {res:.3e}")));
        }
        Ok(u)
    };
    // continuation in the amplitude keeps each branch on its own side
    let branch = |side: f64| -> Result<DVector<f64>> {
        let steps = ((eps / 0.01).ceil() as usize).max(1);
        let mut u = r * (side * eps / steps as f64);
        for k in 1..=steps {
            let e = eps * k as f64 / steps as f64;
            if k > 1 {
                u *= k as f64 / (k - 1) as f64;
            }
            u = solve(u, &(r * (0.5 * cls.lambda * e * e)), e)?;
        }
        Ok(u)
    };
    let u_minus = branch(sign)?;
    let u_plus = branch(-sign)?;
    if (&u_minus - &u_plus).norm() < 0.5 * eps {
        return Err(KmError::Newton("both branches converged to one endstate".into()));
    }
    Ok(ShockData { eps, u_minus, u_plus, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::build_decomposition;
    use crate::model::{generate_synthetic, SyntheticKind};

    #[test]
    fn graph_and_flux_at_base_point() {
        let m = generate_synthetic(SyntheticKind::GnlMin, 7, 5).unwrap();
        let dec = build_decomposition(&m).unwrap();
        let ce = ChapmanEnskog::new(&m, &dec);
        let z = DVector::zeros(dec.dims.kernel);
        assert_eq!(ce.equilibrium_graph(&z).unwrap().norm(), 0.0);
        assert!(ce.flux(&z).unwrap().norm() < 1e-15);
        let d = ce.viscosity();
        assert!((&d - d.transpose()).amax() < 1e-12);
    }

    #[test]
    fn registry_cases() {
        let m = generate_synthetic(SyntheticKind::GnlMin, 7, 5).unwrap();
        let dec = build_decomposition(&m).unwrap();
        let c = classify(&m, &dec, CLASSIFY_TOL).unwrap();
        assert_eq!(c.case, CaseTag::SimpleGnl);
        assert!(c.kappa_scalar() > 0.0);
        let m = generate_synthetic(SyntheticKind::NonChar, 1, 6).unwrap();
        let dec = build_decomposition(&m).unwrap();
        assert_eq!(classify(&m, &dec, CLASSIFY_TOL).unwrap().case, CaseTag::Noncharacteristic);
    }
}
