//! Canonical coordinates, Taylor expansion of the center manifold, the
//! reduced flow with its normal form, and the cutoff Picard construction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chapman::{CaseTag, Classification};
use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::linear::Decomposition;
use crate::model::{bilinear, KineticModel};
use crate::numerics::{inverse, sym_eigen_sorted};
use crate::poly::MonomialTable;
use crate::weighted::{derivative, norm_h1w, norm_z, norm_z_with, SmoothMap, WeightParams};

/// Coordinates (w_c, w_h) in which the linear part becomes a nilpotent
/// block on the center part and the hyperbolic block on the rest.
///
/// Center slots are ordered `[a | b | c]`: `a` follows the kernel of A11,
/// `b` is the constant slope of `a`, and `c` collects the conserved
/// image-of-A11 quantity. `w_h` lives in V~.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    pub dim_c: usize,
    pub dim_h: usize,
    pub r: usize,
    /// Block coordinates to canonical coordinates.
    pub forward: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Linear part on w_c.
    pub j: DMatrix<f64>,
    /// Maps a forcing (block coordinates) to its center contribution.
    pub forcing_c: DMatrix<f64>,
    /// Maps a forcing to its V~ part.
    pub forcing_h: DMatrix<f64>,
    /// Slope of `a` per unit V1 coordinate.
    pub slope: DMatrix<f64>,
    /// Negative definite Schur complement of E on V1.
    pub schur: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
    pub e0: DMatrix<f64>,
    pub e0_inv: DMatrix<f64>,
    t12_inv: DMatrix<f64>,
    cc_from_v1: DMatrix<f64>,
    a11_tilde_inv: DMatrix<f64>,
}

pub fn build_canonical(dec: &Decomposition) -> Result<CanonicalFrame> {
    let dims = dec.dims;
    let (n, p, r, s) = (dims.n, dims.kernel, dims.ker_a11, dims.v_tilde);
    let q = n - p;
    let d = p + r;
    let e11 = dec.e.view((0, 0), (r, r)).into_owned();
    let e1t = dec.e.view((0, r), (r, s)).into_owned();
    let et1 = e1t.transpose();
    let m = &dec.gamma1 + &dec.t12_adj_inv * &e1t * &dec.e0_inv * &dec.gamma0;
    let k = &dec.a11_tilde_inv * dec.a12_tilde.view((0, r), (p - r, s));
    let a12_t1 = dec.a12_tilde.view((0, 0), (p - r, r)).into_owned();
    let schur = &e11 - &e1t * &dec.e0_inv * &et1;
    let slope = &dec.t12_adj_inv * &schur;
    if r > 0 {
        let (ev, _) = sym_eigen_sorted(&crate::numerics::symmetrize(&schur));
        if ev.last().is_some_and(|&l| l >= 0.0) {
            return Err(KmError::Numeric("Schur complement of E is not negative definite".into()));
        }
    }
    let e0_et1 = &dec.e0_inv * &et1;
    let mut f = DMatrix::zeros(n, n);
    // a = u1 - M v~
    f.view_mut((0, 0), (r, r)).copy_from(&DMatrix::identity(r, r));
    f.view_mut((0, p + r), (r, s)).copy_from(&(-&m));
    // b = Sl v1
    f.view_mut((r, p), (r, r)).copy_from(&slope);
    // c = u~ + K z
    f.view_mut((2 * r, r), (p - r, p - r)).copy_from(&DMatrix::identity(p - r, p - r));
    f.view_mut((2 * r, p + r), (p - r, s)).copy_from(&k);
    f.view_mut((2 * r, p), (p - r, r)).copy_from(&(&k * &e0_et1));
    // z = v~ + E0^{-1} E21 v1
    f.view_mut((d, p + r), (s, s)).copy_from(&DMatrix::identity(s, s));
    f.view_mut((d, p), (s, r)).copy_from(&e0_et1);
    let finv = inverse(&f)?;
    let err = (&f * &finv - DMatrix::identity(n, n)).amax();
    if err > 1e-9 {
        return Err(KmError::Numeric(format!("canonical change of coordinates is ill conditioned ({err:.2e})")));
    }
    let mut j = DMatrix::zeros(d, d);
    for i in 0..r {
        j[(i, r + i)] = 1.0;
    }
    let mut forcing_c = DMatrix::zeros(d, n);
    forcing_c.view_mut((0, 0), (r, n)).copy_from(&dec.gamma3_coords.view((0, 0), (r, n)));
    let mut forcing_h = DMatrix::zeros(s, n);
    forcing_h.view_mut((0, p + r), (s, s)).copy_from(&DMatrix::identity(s, s));
    // c in terms of (q_im, v1): A11~^{-1}(q_im - A12~_1 v1 + A12~_t E0^{-1} E21 v1)
    let cc_from_v1 = &dec.a11_tilde_inv * (-&a12_t1 + dec.a12_tilde.view((0, r), (p - r, s)) * &e0_et1);
    debug_assert_eq!(q, r + s);
    Ok(CanonicalFrame {
        dim_c: d,
        dim_h: s,
        r,
        forward: f,
        inverse: finv,
        j,
        forcing_c,
        forcing_h,
        slope,
        schur,
        gamma0: dec.gamma0.clone(),
        e0: dec.e0.clone(),
        e0_inv: dec.e0_inv.clone(),
        t12_inv: inverse(&dec.t12)?,
        cc_from_v1,
        a11_tilde_inv: dec.a11_tilde_inv.clone(),
    })
}

impl CanonicalFrame {
    /// Block coordinates from (w_c, w_h).
    pub fn to_block(&self, wc: &DVector<f64>, wh: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim_c + self.dim_h);
        w.rows_mut(0, self.dim_c).copy_from(wc);
        w.rows_mut(self.dim_c, self.dim_h).copy_from(wh);
        &self.inverse * w
    }

    /// (w_c, w_h) from block coordinates.
    pub fn from_block(&self, c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let w = &self.forward * c;
        (w.rows(0, self.dim_c).into_owned(), w.rows(self.dim_c, self.dim_h).into_owned())
    }

    /// Center slots (b, c) of the fiber with conserved flux level `q`
    /// (kernel coordinates of P A w).
    pub fn fiber_constants(&self, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let r = self.r;
        let p = q.len();
        let v1 = &self.t12_inv * q.rows(0, r);
        let b = &self.slope * &v1;
        let cc = &self.a11_tilde_inv * q.rows(r, p - r) + &self.cc_from_v1 * &v1;
        (b, cc)
    }

    /// Center vector with fiber coordinate `a` and constants (b, c).
    pub fn center_point(&self, a: &DVector<f64>, b: &DVector<f64>, cc: &DVector<f64>) -> DVector<f64> {
        let r = self.r;
        let mut wc = DVector::zeros(self.dim_c);
        wc.rows_mut(0, r).copy_from(a);
        wc.rows_mut(r, r).copy_from(b);
        wc.rows_mut(2 * r, self.dim_c - 2 * r).copy_from(cc);
        wc
    }
}

/// Polynomial graph w_h = Xi(w_c) and the truncated reduced field.
#[derive(Debug, Clone)]
pub struct CenterManifoldExpansion {
    pub order: usize,
    pub frame: CanonicalFrame,
    pub table: MonomialTable,
    /// One polynomial per V~ component.
    pub xi: Vec<Vec<f64>>,
    /// One polynomial per center component.
    pub field: Vec<Vec<f64>>,
    xi_grad: Vec<Vec<Vec<f64>>>,
    b: Vec<f64>,
    n: usize,
}

#[derive(Serialize)]
struct TermJson {
    target_index: usize,
    multi_index: Vec<u8>,
    coeff: f64,
}

impl CenterManifoldExpansion {
    pub fn eval_xi(&self, wc: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.xi.len(), self.xi.iter().map(|pl| self.table.eval(pl, wc.as_slice())))
    }

    fn eval_xi_jacobian(&self, wc: &DVector<f64>) -> DMatrix<f64> {
        let s = self.xi.len();
        DMatrix::from_fn(s, self.frame.dim_c, |i, k| self.table.eval(&self.xi_grad[i][k], wc.as_slice()))
    }

    /// Block coordinates of the manifold point over w_c.
    pub fn lift(&self, wc: &DVector<f64>) -> DVector<f64> {
        self.frame.to_block(wc, &self.eval_xi(wc))
    }

    fn exact_forcing(&self, c: &DVector<f64>) -> DVector<f64> {
        bilinear(&self.b, self.n, c.as_slice(), c.as_slice())
    }

    /// J w_c + g_c(w_c, Xi(w_c)), evaluated without truncation.
    pub fn reduced_field(&self, wc: &DVector<f64>) -> DVector<f64> {
        let c = self.lift(wc);
        &self.frame.j * wc + &self.frame.forcing_c * self.exact_forcing(&c)
    }

    /// Residual of the defining relation of the graph at w_c.
    pub fn defining_residual(&self, wc: &DVector<f64>) -> DVector<f64> {
        let xi = self.eval_xi(wc);
        let c = self.frame.to_block(wc, &xi);
        let f = self.exact_forcing(&c);
        let vel = &self.frame.j * wc + &self.frame.forcing_c * &f;
        &self.frame.gamma0 * self.eval_xi_jacobian(wc) * vel - &self.frame.e0 * xi - &self.frame.forcing_h * f
    }

    /// Largest coefficient magnitude of Xi at degree `d`.
    pub fn max_coefficient(&self, d: usize) -> f64 {
        self.xi
            .iter()
            .flat_map(|pl| self.table.degree_range(d).map(move |i| pl[i].abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut terms = Vec::new();
        for (t, pl) in self.xi.iter().enumerate() {
            for (i, &c) in pl.iter().enumerate() {
                if c != 0.0 {
                    terms.push(TermJson { target_index: t, multi_index: self.table.exponent(i).to_vec(), coeff: c });
                }
            }
        }
        serde_json::json!({ "order": self.order, "dim_c": self.frame.dim_c, "terms": terms })
    }

    /// Coefficients of the `a` components of the field on the slice b = c = 0.
    pub fn kernel_slice_terms(&self, degree: usize) -> Vec<f64> {
        let r = self.frame.r;
        let mut out = Vec::new();
        for comp in 0..r {
            for i in self.table.degree_range(degree) {
                if self.table.exponent(i)[r..].iter().all(|&e| e == 0) {
                    out.push(self.field[comp][i]);
                }
            }
        }
        out
    }
}

fn forcing_polys(
    table: &MonomialTable,
    frame: &CanonicalFrame,
    xi: &[Vec<f64>],
    b: &[f64],
    n: usize,
    p: usize,
) -> Vec<Vec<f64>> {
    let d = frame.dim_c;
    let mut c = vec![table.zero(); n];
    for (i, ci) in c.iter_mut().enumerate() {
        for j in 0..d {
            let w = frame.inverse[(i, j)];
            if w != 0.0 {
                ci[table.linear(j)] += w;
            }
        }
        for (k, pl) in xi.iter().enumerate() {
            let w = frame.inverse[(i, d + k)];
            if w != 0.0 {
                for (t, v) in ci.iter_mut().zip(pl) {
                    *t += w * v;
                }
            }
        }
    }
    let mut prods = vec![vec![]; n * n];
    for i in 0..n {
        for j in i..n {
            let mut pr = table.zero();
            table.mul_add(&c[i], &c[j], 1.0, &mut pr);
            prods[i * n + j] = pr;
        }
    }
    let mut f = vec![table.zero(); n];
    for (k, fk) in f.iter_mut().enumerate().skip(p) {
        for i in 0..n {
            for j in i..n {
                let coef = b[k * n * n + i * n + j] * if i == j { 1.0 } else { 2.0 };
                if coef != 0.0 {
                    for (t, v) in fk.iter_mut().zip(&prods[i * n + j]) {
                        *t += coef * v;
                    }
                }
            }
        }
    }
    f
}

fn apply_matrix(m: &DMatrix<f64>, polys: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| {
            let mut out = vec![0.0; len];
            for (c, pl) in polys.iter().enumerate() {
                let w = m[(r, c)];
                if w != 0.0 {
                    for (t, v) in out.iter_mut().zip(pl) {
                        *t += w * v;
                    }
                }
            }
            out
        })
        .collect()
}

/// Taylor expansion of the center manifold graph to degree `k` in [2, 6].
pub fn taylor_expand(dec: &Decomposition, _model: &KineticModel, k: usize) -> Result<CenterManifoldExpansion> {
    if !(2..=6).contains(&k) {
        return Err(KmError::Config(format!("expansion order must be in [2, 6], got {k}")));
    }
    let frame = build_canonical(dec)?;
    let d = frame.dim_c;
    let s = frame.dim_h;
    let n = dec.dims.n;
    let p = dec.dims.kernel;
    let table = MonomialTable::new(d, k);
    let len = table.len();
    let b = dec.b_coords.clone();
    let mut xi = vec![table.zero(); s];
    // J w_c as polynomials
    let jw: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut pl = table.zero();
            for j in 0..d {
                if frame.j[(i, j)] != 0.0 {
                    pl[table.linear(j)] += frame.j[(i, j)];
                }
            }
            pl
        })
        .collect();
    let update = |xi: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let f = forcing_polys(&table, &frame, xi, &b, n, p);
        let gc = apply_matrix(&frame.forcing_c, &f, len);
        let gh = apply_matrix(&frame.forcing_h, &f, len);
        // Xi'(w_c)(J w_c + g_c)
        let mut chain = vec![table.zero(); s];
        for i in 0..d {
            let mut vel = jw[i].clone();
            for (t, v) in vel.iter_mut().zip(&gc[i]) {
                *t += v;
            }
            for (comp, pl) in xi.iter().enumerate() {
                let dxi = table.derivative(pl, i);
                table.mul_add(&dxi, &vel, 1.0, &mut chain[comp]);
            }
        }
        let g0 = apply_matrix(&frame.gamma0, &chain, len);
        let rhs: Vec<Vec<f64>> = g0
            .iter()
            .zip(&gh)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        apply_matrix(&frame.e0_inv, &rhs, len)
    };
    for deg in 2..=k {
        let range = table.degree_range(deg);
        for _pass in 0..deg + 4 {
            let next = update(&xi);
            let mut change: f64 = 0.0;
            for (comp, pl) in xi.iter_mut().enumerate() {
                for i in range.clone() {
                    change = change.max((pl[i] - next[comp][i]).abs());
                    pl[i] = next[comp][i];
                }
            }
            let big = xi.iter().flat_map(|pl| pl.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            if !big.is_finite() || big > 1e12 {
                return Err(KmError::Numeric(format!("expansion coefficients blow up at degree {deg}")));
            }
            if change == 0.0 {
                break;
            }
        }
    }
    let f = forcing_polys(&table, &frame, &xi, &b, n, p);
    let gc = apply_matrix(&frame.forcing_c, &f, len);
    let field: Vec<Vec<f64>> = (0..d).map(|i| jw[i].iter().zip(&gc[i]).map(|(a, b)| a + b).collect()).collect();
    let xi_grad = xi.iter().map(|pl| (0..d).map(|i| table.derivative(pl, i)).collect()).collect();
    Ok(CenterManifoldExpansion { order: k, frame, table, xi, field, xi_grad, b, n })
}

/// Largest quadratic or cubic coefficient of the kernel fiber field on the
/// slice where every conserved quantity vanishes.
pub fn kernel_fiber_terms(model: &KineticModel, dec: &Decomposition) -> Result<f64> {
    if dec.dims.ker_a11 == 0 {
        return Ok(0.0);
    }
    let exp = taylor_expand(dec, model, 3)?;
    Ok(exp
        .kernel_slice_terms(2)
        .into_iter()
        .chain(exp.kernel_slice_terms(3))
        .fold(0.0, |m, v| m.max(v.abs())))
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalForm {
    pub kappa: f64,
    /// Quadratic coefficient of the fiber field along r_bar.
    pub chi: f64,
    pub lambda: f64,
    /// |kappa chi - Lambda/2| / |Lambda/2|; only for a genuinely nonlinear field.
    pub deviation: Option<f64>,
}

pub fn normal_form(exp: &CenterManifoldExpansion, cls: &Classification) -> Result<NormalForm> {
    match cls.case {
        CaseTag::Noncharacteristic => {
            return Err(KmError::InvalidModel("normal form needs a characteristic field".into()))
        }
        CaseTag::Unclassified => return Err(KmError::InvalidModel("field is unclassified".into())),
        _ => {}
    }
    if exp.frame.r != 1 {
        return Err(KmError::InvalidModel("normal form is implemented for a simple kernel".into()));
    }
    let mut e = vec![0u8; exp.frame.dim_c];
    e[0] = 2;
    let raw = exp.field[0][exp.table.index_of(&e).expect("degree 2 present")];
    // orientation of the frame's kernel vector relative to r_bar
    let align = cls.r_bar_coords[0].signum();
    let chi = align * raw;
    let kappa = cls.kappa_scalar();
    let half = 0.5 * cls.lambda;
    // Lambda is roundoff on a linearly degenerate field
    let deviation = (cls.case == CaseTag::SimpleGnl).then(|| (kappa * chi - half).abs() / half.abs());
    Ok(NormalForm { kappa, chi, lambda: cls.lambda, deviation })
}

/// Smooth bump equal to one on [-1, 1] and vanishing outside [-2, 2].
pub fn cutoff(s: f64) -> f64 {
    let a = s.abs();
    let u = sigma(2.0 - a);
    let v = sigma(a - 1.0);
    if u + v == 0.0 {
        0.0
    } else {
        u / (u + v)
    }
}

pub fn cutoff_derivative(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 || a >= 2.0 {
        return 0.0;
    }
    let u = sigma(2.0 - a);
    let v = sigma(a - 1.0);
    let du = -dsigma(2.0 - a);
    let dv = dsigma(a - 1.0);
    s.signum() * (du * v - u * dv) / ((u + v) * (u + v))
}

fn sigma(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn dsigma(t: f64) -> f64 {
    if t > 0.0 {
        sigma(t) / (t * t)
    } else {
        0.0
    }
}

/// Largest |rho'| sampled finely on [1, 2].
pub fn cutoff_derivative_bound() -> f64 {
    (0..=4000).map(|i| cutoff_derivative(1.0 + i as f64 / 4000.0).abs()).fold(0.0, f64::max)
}

/// w -> rho(|w|^2 / eps0^2) B(w, w) in block coordinates.
#[derive(Debug, Clone)]
pub struct CutoffNonlinearity {
    pub b: Vec<f64>,
    pub n: usize,
    pub eps0: f64,
}

impl CutoffNonlinearity {
    pub fn new(dec: &Decomposition, eps0: f64) -> Self {
        CutoffNonlinearity { b: dec.b_coords.clone(), n: dec.dims.n, eps0 }
    }
}

impl SmoothMap for CutoffNonlinearity {
    fn apply(&self, v: &[f64]) -> DVector<f64> {
        let s = v.iter().map(|x| x * x).sum::<f64>() / (self.eps0 * self.eps0);
        let rho = cutoff(s);
        if rho == 0.0 {
            return DVector::zeros(self.n);
        }
        bilinear(&self.b, self.n, v, v) * rho
    }

    fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let s = v.iter().map(|x| x * x).sum::<f64>() / (self.eps0 * self.eps0);
        let rho = cutoff(s);
        let drho = cutoff_derivative(s);
        let mut jac = DMatrix::zeros(n, n);
        if rho == 0.0 && drho == 0.0 {
            return jac;
        }
        for k in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += self.b[k * n * n + i * n + l] * v[l];
                }
                jac[(k, i)] = 2.0 * rho * acc;
            }
        }
        if drho != 0.0 {
            let bw = bilinear(&self.b, n, v, v);
            let scale = 2.0 * drho / (self.eps0 * self.eps0);
            for k in 0..n {
                for i in 0..n {
                    jac[(k, i)] += scale * bw[k] * v[i];
                }
            }
        }
        jac
    }
}

/// Parameters of the cutoff Picard scheme.
#[derive(Debug, Clone, Serialize)]
pub struct PicardConfig {
    pub eps0: f64,
    pub eps1: f64,
    pub delta: f64,
    pub weights: WeightParams,
    pub half_width: f64,
    pub nodes: usize,
    pub max_iter: usize,
    pub tol_fixpoint: f64,
    /// Empirical constant bounding the Lipschitz factor of the fixed-point map
    /// per unit eps0.
    pub op_constant: f64,
}

fn frobenius(b: &[f64]) -> f64 {
    b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest observed ratio |K f|_Z / |f|_Z over seeded smooth forcings.
pub fn measure_k_norm(dec: &Decomposition, weights: &WeightParams, half_width: f64, nodes: usize) -> f64 {
    let n = dec.dims.n;
    let p = dec.dims.kernel;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..6 {
        let centers: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3) * half_width).collect();
        let widths: Vec<f64> = (0..3).map(|_| rng.random_range(0.02..0.2) * half_width).collect();
        let amps: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|k| if k < p { 0.0 } else { rng.random_range(-1.0..1.0) }).collect()).collect();
        let f = GridFunction::from_fn(half_width, nodes, n, |x| {
            let mut v = DVector::zeros(n);
            for j in 0..3 {
                let g = (-((x - centers[j]) / widths[j]).powi(2)).exp();
                for k in 0..n {
                    v[k] += amps[j][k] * g;
                }
            }
            v
        })
        .expect("valid grid");
        let kf = dec.k_coords(&f);
        let ratio = norm_z(&kf, weights) / norm_z(&f, weights);
        worst = worst.max(ratio);
    }
    worst
}

impl PicardConfig {
    /// Defaults: weights scaled by the decay rate, L = 20/nu, 2049 nodes,
    /// radii chosen so that every smallness inequality holds with margin.
    pub fn calibrate(dec: &Decomposition) -> Result<Self> {
        Self::calibrate_with(dec, WeightParams::for_rate(dec.nu), 20.0 / dec.nu, 2049)
    }

    pub fn calibrate_with(dec: &Decomposition, weights: WeightParams, half_width: f64, nodes: usize) -> Result<Self> {
        let k_norm = measure_k_norm(dec, &weights, half_width, nodes);
        let lip = frobenius(&dec.b_coords) * 2.0 * 2f64.sqrt() * (1.0 + 2.0 * cutoff_derivative_bound());
        let c = (k_norm * lip).max(1e-12);
        let eps0 = 0.2 / c;
        let delta = 0.2 / c;
        let eps1 = 0.4 * delta / c;
        let cfg = PicardConfig {
            eps0,
            eps1,
            delta,
            weights,
            half_width,
            nodes,
            max_iter: 200,
            tol_fixpoint: 1e-13,
            op_constant: c,
        };
        cfg.validate(dec)?;
        Ok(cfg)
    }

    pub fn validate(&self, dec: &Decomposition) -> Result<()> {
        let c = self.op_constant;
        let w = &self.weights;
        WeightParams::new(w.alpha, w.gamma, w.beta)?;
        w.check_rate(dec.nu)?;
        // boundary weight of the derivative part of the Z norm
        if 2.0 * w.beta * self.half_width < 8.0 {
            return Err(KmError::Config(format!("2 beta L = {:.2} must be at least 8", 2.0 * w.beta * self.half_width)));
        }
        if !(c * self.eps0 < 0.25 && c * self.eps1 < 0.5 * self.delta && c * self.delta < 0.25) {
            return Err(KmError::Config(format!(
                "smallness violated: c eps0 = {:.3}, c eps1 / delta = {:.3}, c delta = {:.3}",
                c * self.eps0,
                c * self.eps1 / self.delta,
                c * self.delta
            )));
        }
        Ok(())
    }

    /// Same configuration with a different cutoff radius; the smallness
    /// inequalities are not re-enforced.
    pub fn with_eps0(&self, eps0: f64) -> Self {
        PicardConfig { eps0, ..self.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardDiagnostics {
    pub iterations: usize,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub interior_residual: f64,
    pub h1_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    /// Deviation from u_bar in ambient coordinates.
    pub grid: GridFunction,
    /// Same in block coordinates.
    pub coords: GridFunction,
    pub diagnostics: PicardDiagnostics,
}

/// Fixed point of w -> F_c(., w0) + K[rho(|w|^2/eps0^2) B(w, w)].
pub fn picard_solve(dec: &Decomposition, w0: &DVector<f64>, cfg: &PicardConfig) -> Result<PicardSolution> {
    let c0 = dec.to_coords(w0);
    let res = (&dec.pc_coords * &c0 - &c0).norm();
    if res > 1e-8 * c0.norm().max(1e-300) && res > 1e-14 {
        return Err(KmError::NotCenter(res));
    }
    let n = dec.dims.n;
    let base = dec.center_flow_coords(&c0, cfg.half_width, cfg.nodes);
    let nl = CutoffNonlinearity::new(dec, cfg.eps0);
    let apply_nl = |w: &GridFunction| w.map_nodes(n, |_, v| nl.apply(v));
    let mut w = GridFunction::zeros(cfg.half_width, cfg.nodes, n)?;
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let next = base.add(&dec.k_coords(&apply_nl(&w)));
        let dist = norm_z(&next.sub(&w), &cfg.weights);
        let size = norm_z(&next, &cfg.weights);
        w = next;
        if let Some(&prev) = distances.last() {
            let prev: f64 = prev;
            if prev > 1e-12 * size {
                let ratio = dist / prev;
                ratios.push(ratio);
                if ratio > 0.9 && it > 2 {
                    return Err(KmError::Numeric(format!("Picard contraction ratio {ratio:.3} exceeds 0.9")));
                }
            }
        }
        distances.push(dist);
        if dist <= cfg.tol_fixpoint * size || size == 0.0 {
            break;
        }
        if it + 1 == cfg.max_iter {
            return Err(KmError::Numeric(format!("Picard iteration did not converge (distance {dist:.3e})")));
        }
    }
    let residual = truncated_residual(dec, &w, cfg.eps0);
    let interior_residual = residual.sup_norm_interior(0.5);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let diagnostics = PicardDiagnostics {
        iterations,
        distances,
        ratios,
        max_ratio,
        interior_residual,
        h1_norm: norm_h1w(&w, cfg.weights.alpha),
    };
    Ok(PicardSolution { grid: dec.grid_from_coords(&w), coords: w, diagnostics })
}

/// A w' - Q'(u_bar) w - N(w) in block coordinates.
pub fn truncated_residual(dec: &Decomposition, w: &GridFunction, eps0: f64) -> GridFunction {
    let n = dec.dims.n;
    let nl = CutoffNonlinearity::new(dec, eps0);
    let dw = derivative(w);
    let mut out = GridFunction::zeros(w.half_width(), w.nodes(), n).expect("valid grid");
    for i in 0..w.nodes() {
        let r = &dec.a_coords * dw.value(i) - &dec.dq_coords * w.value(i) - nl.apply(w.row(i));
        out.row_mut(i).copy_from_slice(r.as_slice());
    }
    out
}

/// Hyperbolic part (I - P_c) of the solution at x = 0, ambient coordinates.
pub fn graph_jc(dec: &Decomposition, sol: &PicardSolution) -> DVector<f64> {
    let c = sol.coords.value(sol.coords.center());
    dec.from_coords(&(&c - &dec.pc_coords * &c))
}

/// Distance between the shifted solution through w0 and the solution
/// through the projected shifted state, over nodes with |x|, |x + x0| <= L/4.
pub fn translation_defect(dec: &Decomposition, w0: &DVector<f64>, cfg: &PicardConfig, shift_nodes: usize) -> Result<f64> {
    let first = picard_solve(dec, w0, cfg)?;
    let g = &first.coords;
    let c = g.center();
    let shifted = g.value(c + shift_nodes);
    let w0_shift = dec.from_coords(&(&dec.pc_coords * shifted));
    let second = picard_solve(dec, &w0_shift, cfg)?;
    let quarter = 0.25 * cfg.half_width;
    let mut worst: f64 = 0.0;
    for i in 0..g.nodes() - shift_nodes {
        let x = g.x(i);
        if x.abs() <= quarter && (x + g.step() * shift_nodes as f64).abs() <= quarter {
            let diff = (g.value(i + shift_nodes) - second.coords.value(i)).norm();
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

/// Distance of the Z norm contraction between two grids, exposed for reports.
pub fn z_distance(a: &GridFunction, b: &GridFunction, p: &WeightParams) -> f64 {
    let d = a.sub(b);
    norm_z_with(&d, &derivative(&d), p)
}
