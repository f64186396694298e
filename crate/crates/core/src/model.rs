//! Relaxation models A w' = Q(w) with Q(w) = B(w, w), hypothesis checks and
//! the seeded synthetic model generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KmError, Result};
use crate::numerics::{column_basis, inverse, orth_complement, singular_values, sym_eigen_sorted};

/// Relative tolerance used for hypothesis checks.
pub const HYPOTHESIS_TOL: f64 = 1e-8;
/// Relative tolerance for positive definiteness and injectivity.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// A finite-dimensional relaxation model.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticModel {
    pub name: String,
    pub dim: usize,
    /// Metric defining the inner product.
    pub gram: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Dense tensor, `b[k*n*n + i*n + j]` is the k-th coordinate of B(e_i, e_j).
    pub b: Vec<f64>,
    pub u_bar: DVector<f64>,
    pub v_perp_basis: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    name: String,
    dim: usize,
    gram: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    u_bar: Vec<f64>,
    v_perp_basis: Vec<Vec<f64>>,
}

/// Parses a model file. B is symmetrized in its two arguments; the
/// hypotheses are checked separately by [`verify_hypotheses`].
pub fn load_model(source: &[u8]) -> Result<KineticModel> {
    let file: ModelFile =
        serde_json::from_slice(source).map_err(|e| KmError::Schema(e.to_string()))?;
    let n = file.dim;
    if n == 0 {
        return Err(KmError::EmptyStateSpace);
    }
    let expect = |what: &str, len: usize, want: usize| -> Result<()> {
        if len != want {
            Err(KmError::Dimension(format!("{what}: expected {want} entries, got {len}")))
        } else {
            Ok(())
        }
    };
    expect("gram", file.gram.len(), n * n)?;
    expect("A", file.a.len(), n * n)?;
    expect("B", file.b.len(), n * n * n)?;
    expect("u_bar", file.u_bar.len(), n)?;
    for (i, v) in file.v_perp_basis.iter().enumerate() {
        expect(&format!("v_perp_basis[{i}]"), v.len(), n)?;
    }
    let all = file
        .gram
        .iter()
        .chain(&file.a)
        .chain(&file.b)
        .chain(&file.u_bar)
        .chain(file.v_perp_basis.iter().flatten());
    if all.into_iter().any(|v| !v.is_finite()) {
        return Err(KmError::Schema("non-finite entry".into()));
    }
    let gram = DMatrix::from_row_slice(n, n, &file.gram);
    let asym = (&gram - gram.transpose()).amax();
    if asym > STRUCTURE_TOL * gram.amax().max(1.0) {
        return Err(KmError::InvalidModel(format!("gram matrix is not symmetric (defect {asym:.3e})")));
    }
    let mut b = file.b;
    for k in 0..n {
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (b[k * n * n + i * n + j] + b[k * n * n + j * n + i]);
                b[k * n * n + i * n + j] = s;
                b[k * n * n + j * n + i] = s;
            }
        }
    }
    Ok(KineticModel {
        name: file.name,
        dim: n,
        gram,
        a: DMatrix::from_row_slice(n, n, &file.a),
        b,
        u_bar: DVector::from_vec(file.u_bar),
        v_perp_basis: file.v_perp_basis.into_iter().map(DVector::from_vec).collect(),
    })
}

impl KineticModel {
    /// Serializes to the model-file JSON schema.
    pub fn to_json(&self) -> String {
        let n = self.dim;
        let row_major = |m: &DMatrix<f64>| {
            let mut v = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        let file = ModelFile {
            name: self.name.clone(),
            dim: n,
            gram: row_major(&self.gram),
            a: row_major(&self.a),
            b: self.b.clone(),
            u_bar: self.u_bar.iter().cloned().collect(),
            v_perp_basis: self.v_perp_basis.iter().map(|v| v.iter().cloned().collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn b_entry(&self, k: usize, i: usize, j: usize) -> f64 {
        self.b[k * self.dim * self.dim + i * self.dim + j]
    }

    /// B(h, g).
    pub fn bilinear(&self, h: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        bilinear(&self.b, self.dim, h.as_slice(), g.as_slice())
    }

    /// Matrix of the linear map g -> 2 B(w0, g).
    pub fn dq_matrix(&self, w0: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += self.b[k * n * n + i * n + j] * w0[i];
                }
                m[(k, j)] = 2.0 * acc;
            }
        }
        m
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.gram * y)[(0, 0)]
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            Err(KmError::Dimension(format!("vector length {} != dim {}", v.len(), self.dim)))
        } else {
            Ok(())
        }
    }
}

pub fn bilinear(b: &[f64], n: usize, h: &[f64], g: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for k in 0..n {
        let mut acc = 0.0;
        let base = k * n * n;
        for i in 0..n {
            if h[i] == 0.0 {
                continue;
            }
            let row = &b[base + i * n..base + (i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * g[j];
            }
            acc += h[i] * s;
        }
        out[k] = acc;
    }
    out
}

/// Q(w) = B(w, w).
pub fn apply_q(model: &KineticModel, w: &DVector<f64>) -> Result<DVector<f64>> {
    model.check_dim(w)?;
    Ok(model.bilinear(w, w))
}

/// Q'(w0) h = 2 B(w0, h).
pub fn apply_dq(model: &KineticModel, w0: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
    model.check_dim(w0)?;
    model.check_dim(h)?;
    Ok(model.bilinear(w0, h) * 2.0)
}

/// Which structural hypothesis a finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisTag {
    GramSpd,
    ASelfAdjoint,
    AInjective,
    BSymmetric,
    BRange,
    Equilibrium,
    DqSelfAdjoint,
    DqKernel,
    DqNegative,
}

/// One violated invariant with its numeric witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tag: HypothesisTag,
    pub witness: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub pass: bool,
    pub delta: f64,
    pub violations: Vec<Violation>,
}

impl HypothesisReport {
    pub fn has(&self, tag: HypothesisTag) -> bool {
        self.violations.iter().any(|v| v.tag == tag)
    }
}

/// Checks the structural hypotheses; failures are report entries.
pub fn verify_hypotheses(model: &KineticModel, tol: f64) -> HypothesisReport {
    let n = model.dim;
    let mut violations = Vec::new();
    let mut push = |tag, witness: f64, detail: String| violations.push(Violation { tag, witness, detail });

    let gram_sym = crate::numerics::symmetrize(&model.gram);
    let (gvals, _) = sym_eigen_sorted(&gram_sym);
    let gmax = gvals.last().cloned().unwrap_or(0.0);
    let gmin = gvals.first().cloned().unwrap_or(0.0);
    let gasym = (&model.gram - model.gram.transpose()).amax();
    if gmin <= STRUCTURE_TOL * gmax.abs().max(f64::MIN_POSITIVE) || gasym > tol * gmax.abs() {
        push(HypothesisTag::GramSpd, gmin / gmax.abs().max(f64::MIN_POSITIVE), "smallest gram eigenvalue".into());
        return HypothesisReport { pass: false, delta: 0.0, violations };
    }
    let chol = gram_sym.clone().cholesky().expect("gram is positive definite");
    let lt = chol.l().transpose();
    let lt_inv = inverse(&lt).expect("triangular factor invertible");
    let whiten = |m: &DMatrix<f64>| &lt * m * &lt_inv;

    let anorm = model.a.norm().max(f64::MIN_POSITIVE);
    let sa = &model.gram * &model.a - model.a.transpose() * &model.gram;
    let sa_rel = sa.norm() / (anorm * gmax);
    if sa_rel > tol {
        push(HypothesisTag::ASelfAdjoint, sa_rel, "relative defect of gram*A - A^T*gram".into());
    }
    let aw = whiten(&model.a);
    let sv = singular_values(&aw);
    let smin = sv.last().cloned().unwrap_or(0.0) / sv.first().cloned().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    if smin <= STRUCTURE_TOL {
        push(HypothesisTag::AInjective, smin, "smallest singular value of A relative to its norm".into());
    }

    let bmax = model.b.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut basym: f64 = 0.0;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                basym = basym.max((model.b_entry(k, i, j) - model.b_entry(k, j, i)).abs());
            }
        }
    }
    if basym > tol * bmax {
        push(HypothesisTag::BSymmetric, basym / bmax, "largest |B[k][i][j] - B[k][j][i]| relative".into());
    }

    let p = model.v_perp_basis.len();
    let mut vp = DMatrix::zeros(n, p);
    for (c, v) in model.v_perp_basis.iter().enumerate() {
        if v.len() == n {
            vp.set_column(c, &(&lt * v));
        }
    }
    let vp_orth = column_basis(&vp, STRUCTURE_TOL);
    if vp_orth.ncols() != p || p == 0 {
        push(HypothesisTag::DqKernel, vp_orth.ncols() as f64, "kernel basis is empty or rank deficient".into());
    }
    let vb = orth_complement(&vp_orth);

    let mut brange: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut ei = DVector::zeros(n);
            ei[i] = 1.0;
            let mut ej = DVector::zeros(n);
            ej[j] = 1.0;
            let bij = &lt * model.bilinear(&ei, &ej);
            brange = brange.max((vp_orth.transpose() * bij).amax());
        }
    }
    let bscale = bmax * gmax.sqrt();
    if brange > tol * bscale {
        push(HypothesisTag::BRange, brange / bscale, "largest kernel component of B(e_i, e_j)".into());
    }

    let ubn = model.norm(&model.u_bar).max(f64::MIN_POSITIVE);
    let qbar = model.norm(&model.bilinear(&model.u_bar, &model.u_bar));
    let dq = model.dq_matrix(&model.u_bar);
    let dqw = whiten(&dq);
    let dq_scale = dqw.norm().max(f64::MIN_POSITIVE);
    if qbar > tol * dq_scale * ubn {
        push(HypothesisTag::Equilibrium, qbar, "norm of Q(u_bar)".into());
    }
    let dq_asym = (&dqw - dqw.transpose()).norm() / dq_scale;
    if dq_asym > tol {
        push(HypothesisTag::DqSelfAdjoint, dq_asym, "relative asymmetry of Q'(u_bar)".into());
    }
    let ker_defect = (&dqw * &vp_orth).norm() / dq_scale;
    if ker_defect > tol {
        push(HypothesisTag::DqKernel, ker_defect, "Q'(u_bar) does not vanish on the kernel basis".into());
    }
    let e = vb.transpose() * crate::numerics::symmetrize(&dqw) * &vb;
    let (evals, _) = sym_eigen_sorted(&e);
    let lmax = evals.last().cloned().unwrap_or(f64::NEG_INFINITY);
    let delta = -lmax;
    if evals.is_empty() || delta <= tol * dq_scale {
        push(HypothesisTag::DqNegative, delta, "largest eigenvalue of Q'(u_bar) on the complement is not negative".into());
    }
    let pass = violations.is_empty();
    HypothesisReport { pass, delta: if pass { delta } else { delta.max(0.0) }, violations }
}

/// Orthonormal coordinates adapted to the kernel of the linearization.
///
/// `c = to_coords * x`; coordinates `0..p` span the kernel, `p..n` its
/// orthogonal complement, and the coordinate inner product is Euclidean.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub p: usize,
    pub to_coords: DMatrix<f64>,
    pub from_coords: DMatrix<f64>,
}

impl AdaptedFrame {
    pub fn new(model: &KineticModel) -> Result<Self> {
        let n = model.dim;
        let chol = crate::numerics::symmetrize(&model.gram)
            .cholesky()
            .ok_or_else(|| KmError::Hypothesis("gram is not positive definite".into()))?;
        let lt = chol.l().transpose();
        let lt_inv = inverse(&lt)?;
        let p = model.v_perp_basis.len();
        let mut vp = DMatrix::zeros(n, p);
        for (c, v) in model.v_perp_basis.iter().enumerate() {
            vp.set_column(c, &(&lt * v));
        }
        let vp = column_basis(&vp, STRUCTURE_TOL);
        if vp.ncols() != p {
            return Err(KmError::Hypothesis("kernel basis is rank deficient".into()));
        }
        let vb = orth_complement(&vp);
        let mut phi = DMatrix::zeros(n, n);
        phi.view_mut((0, 0), (n, p)).copy_from(&vp);
        phi.view_mut((0, p), (n, n - p)).copy_from(&vb);
        Ok(AdaptedFrame { p, to_coords: phi.transpose() * &lt, from_coords: lt_inv * phi })
    }

    /// Refines the frame by orthogonal changes of basis within each block.
    pub fn rotated(&self, rot_perp: &DMatrix<f64>, rot_comp: &DMatrix<f64>) -> AdaptedFrame {
        let n = self.to_coords.nrows();
        let mut r = DMatrix::zeros(n, n);
        r.view_mut((0, 0), (self.p, self.p)).copy_from(rot_perp);
        r.view_mut((self.p, self.p), (n - self.p, n - self.p)).copy_from(rot_comp);
        AdaptedFrame {
            p: self.p,
            to_coords: r.transpose() * &self.to_coords,
            from_coords: &self.from_coords * r,
        }
    }

    /// Matrix of a linear operator in frame coordinates.
    pub fn operator(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.to_coords * m * &self.from_coords
    }

    /// Quadratic tensor in frame coordinates.
    pub fn tensor(&self, model: &KineticModel) -> Vec<f64> {
        let n = model.dim;
        let mut out = vec![0.0; n * n * n];
        let cols: Vec<DVector<f64>> = (0..n).map(|i| self.from_coords.column(i).into_owned()).collect();
        for i in 0..n {
            for j in i..n {
                let v = &self.to_coords * model.bilinear(&cols[i], &cols[j]);
                for k in 0..n {
                    out[k * n * n + i * n + j] = v[k];
                    out[k * n * n + j * n + i] = v[k];
                }
            }
        }
        out
    }
}

/// Synthetic model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticKind {
    GnlMin,
    GnlRich,
    LdgMin,
    NonChar,
}

impl SyntheticKind {
    /// Kernel dimension of the linearization.
    pub fn kernel_dim(self) -> usize {
        match self {
            SyntheticKind::GnlMin => 2,
            SyntheticKind::GnlRich => 3,
            SyntheticKind::LdgMin | SyntheticKind::NonChar => 1,
        }
    }

    pub fn characteristic(self) -> bool {
        self != SyntheticKind::NonChar
    }

    pub fn label(self) -> &'static str {
        match self {
            SyntheticKind::GnlMin => "gnl-min",
            SyntheticKind::GnlRich => "gnl-rich",
            SyntheticKind::LdgMin => "ldg-min",
            SyntheticKind::NonChar => "nonchar",
        }
    }
}

const MAX_RETRIES: u64 = 64;

/// Builds a seeded model of the requested family.
///
/// The model is assembled in an orthonormal frame where the first `p`
/// coordinates span the kernel of the linearization and the first of those
/// spans the kernel of the kernel block of A. It is then rotated within both
/// blocks and pushed through a random metric so that no structure is visible
/// in the ambient coordinates.
pub fn generate_synthetic(kind: SyntheticKind, seed: u64, n: usize) -> Result<KineticModel> {
    let p = kind.kernel_dim();
    if n < p + 2 {
        return Err(KmError::Config(format!("{} needs n >= {}", kind.label(), p + 2)));
    }
    for attempt in 0..MAX_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt));
        if let Some(model) = try_recipe(kind, n, &mut rng) {
            let model = KineticModel { name: format!("{}-s{}-n{}", kind.label(), seed, n), ..model };
            if accept(&model, kind) {
                return Ok(model);
            }
        }
    }
    Err(KmError::Numeric(format!("recipe for {} failed after {MAX_RETRIES} retries", kind.label())))
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let qr = gaussian(rng, k, k).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

fn try_recipe(kind: SyntheticKind, n: usize, rng: &mut ChaCha8Rng) -> Option<KineticModel> {
    let p = kind.kernel_dim();
    let q = n - p;
    let r = usize::from(kind.characteristic());

    // operator A in adapted coordinates
    let mut a = DMatrix::zeros(n, n);
    for i in r..p {
        let mag = rng.random_range(0.6..1.8);
        a[(i, i)] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let a12 = gaussian(rng, p, q) * 0.8;
    a.view_mut((0, p), (p, q)).copy_from(&a12);
    a.view_mut((p, 0), (q, p)).copy_from(&a12.transpose());
    let g22 = gaussian(rng, q, q) * 0.6;
    a.view_mut((p, p), (q, q)).copy_from(&((&g22 + g22.transpose()) * 0.5));

    // linearization on the complement, symmetric negative definite
    let g = gaussian(rng, q, q);
    let e = -((g.transpose() * &g) / q as f64 + DMatrix::identity(q, q) * 0.6);

    // base state inside the kernel block, away from the A11-kernel direction
    let ubar_index = if p >= 2 { r } else { 0 };
    let mut u_bar = DVector::zeros(n);
    u_bar[ubar_index] = 1.0;

    let mut b = vec![0.0; n * n * n];
    let set = |b: &mut Vec<f64>, i: usize, j: usize, v: &DVector<f64>| {
        for k in 0..q {
            b[(p + k) * n * n + i * n + j] = v[k];
            b[(p + k) * n * n + j * n + i] = v[k];
        }
    };
    for i in 0..n {
        for j in i..n {
            let v = if i == ubar_index || j == ubar_index {
                let other = if i == ubar_index { j } else { i };
                if other >= p {
                    e.column(other - p).into_owned() * 0.5
                } else {
                    DVector::zeros(q)
                }
            } else {
                DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5)
            };
            set(&mut b, i, j, &v);
        }
    }

    match kind {
        SyntheticKind::LdgMin => {
            // no self-interaction along the A11-kernel direction
            set(&mut b, 0, 0, &DVector::zeros(q));
        }
        SyntheticKind::GnlMin | SyntheticKind::GnlRich => {
            // Lambda = -2 T12 E^{-1} B(r, r); rescale B(r, r) to |Lambda| = 1
            let t12 = a12.row(0).transpose();
            let einv = inverse(&e).ok()?;
            let b00 = DVector::from_fn(q, |k, _| b[(p + k) * n * n]);
            let lambda = -2.0 * t12.dot(&(&einv * &b00));
            if lambda.abs() < 1e-3 {
                return None;
            }
            set(&mut b, 0, 0, &(b00 / lambda.abs()));
        }
        SyntheticKind::NonChar => {}
    }

    // rotate within blocks, then push through a random metric
    let rp = random_orthogonal(rng, p);
    let rq = random_orthogonal(rng, q);
    let mut phi = DMatrix::zeros(n, n);
    phi.view_mut((0, 0), (p, p)).copy_from(&rp);
    phi.view_mut((p, p), (q, q)).copy_from(&rq);
    let mut l = DMatrix::identity(n, n);
    for i in 0..n {
        l[(i, i)] = rng.random_range(0.8..1.25);
        for j in 0..i {
            l[(i, j)] = 0.25 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let gram = &l * l.transpose();
    let to_c = phi.transpose() * l.transpose();
    let from_c = inverse(&to_c).ok()?;
    let a_amb = &from_c * &a * &to_c;
    let mut b_amb = vec![0.0; n * n * n];
    let cols: Vec<DVector<f64>> = (0..n).map(|i| to_c.column(i).into_owned()).collect();
    for i in 0..n {
        for j in i..n {
            let v = &from_c * bilinear(&b, n, cols[i].as_slice(), cols[j].as_slice());
            for k in 0..n {
                b_amb[k * n * n + i * n + j] = v[k];
                b_amb[k * n * n + j * n + i] = v[k];
            }
        }
    }
    let v_perp_basis = (0..p).map(|i| from_c.column(i).into_owned()).collect();
    Some(KineticModel {
        name: String::new(),
        dim: n,
        gram,
        a: a_amb,
        b: b_amb,
        u_bar: &from_c * u_bar,
        v_perp_basis,
    })
}

fn accept(model: &KineticModel, kind: SyntheticKind) -> bool {
    if !verify_hypotheses(model, HYPOTHESIS_TOL).pass {
        return false;
    }
    let Ok(dec) = crate::linear::build_decomposition(model) else {
        return false;
    };
    let r = usize::from(kind.characteristic());
    dec.dims.ker_a11 == r
        && dec.nu >= 0.1
        && dec.nu_max <= 25.0
        && dec.gamma0_condition <= 200.0
        && dec.a_condition <= 200.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_homogeneity_and_symmetry() {
        let m = generate_synthetic(SyntheticKind::GnlMin, 7, 5).unwrap();
        let w = DVector::from_fn(5, |i, _| 0.1 * (i as f64 + 1.0).sin());
        let q1 = apply_q(&m, &w).unwrap();
        for s in [-2.0, 0.5, 3.0] {
            let qs = apply_q(&m, &(&w * s)).unwrap();
            assert!((qs - &q1 * (s * s)).norm() <= 1e-13 * q1.norm().max(1.0));
        }
        let h = DVector::from_fn(5, |i, _| (i as f64 * 0.7).cos());
        let lhs = m.inner(&apply_dq(&m, &m.u_bar, &w).unwrap(), &h);
        let rhs = m.inner(&w, &apply_dq(&m, &m.u_bar, &h).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(apply_q(&m, &m.u_bar).unwrap().norm() < 1e-12);
        assert_eq!(apply_dq(&m, &w, &DVector::zeros(5)).unwrap().norm(), 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let m = generate_synthetic(SyntheticKind::NonChar, 1, 6).unwrap();
        let back = load_model(m.to_json().as_bytes()).unwrap();
        assert_eq!(back.dim, 6);
        assert!((&back.a - &m.a).amax() < 1e-15);
        assert!(verify_hypotheses(&back, HYPOTHESIS_TOL).pass);
    }

    #[test]
    fn load_errors() {
        let empty = r#"{"name":"e","dim":0,"gram":[],"A":[],"B":[],"u_bar":[],"v_perp_basis":[]}"#;
        assert!(matches!(load_model(empty.as_bytes()), Err(KmError::EmptyStateSpace)));
        let asym = r#"{"name":"a","dim":2,"gram":[1,0.5,0,1],"A":[1,0,0,1],"B":[0,0,0,0,0,0,0,0],"u_bar":[0,0],"v_perp_basis":[[1,0]]}"#;
        assert!(matches!(load_model(asym.as_bytes()), Err(KmError::InvalidModel(_))));
        let short = r#"{"name":"s","dim":2,"gram":[1,0,0,1],"A":[1,0,0],"B":[0,0,0,0,0,0,0,0],"u_bar":[0,0],"v_perp_basis":[]}"#;
        assert!(matches!(load_model(short.as_bytes()), Err(KmError::Dimension(_))));
        assert!(matches!(load_model(b"{"), Err(KmError::Schema(_))));
    }

    #[test]
    fn verify_is_pure() {
        let m = generate_synthetic(SyntheticKind::LdgMin, 3, 6).unwrap();
        let r1 = verify_hypotheses(&m, HYPOTHESIS_TOL);
        let r2 = verify_hypotheses(&m, HYPOTHESIS_TOL);
        assert_eq!(r1, r2);
        assert!(r1.pass && r1.delta > 0.0);
    }
}
