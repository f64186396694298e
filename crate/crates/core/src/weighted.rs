//! Exponentially weighted norms on grids, numerical differentiation and the
//! substitution-operator checks used by the fixed-point theory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::numerics::{loglog_fit, LineFit};

/// Weight rates for the Picard scheme, ordered alpha < gamma < beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl WeightParams {
    pub fn new(alpha: f64, gamma: f64, beta: f64) -> Result<Self> {
        let p = WeightParams { alpha, gamma, beta };
        if !(alpha > 0.0 && alpha < gamma && gamma < beta) {
            return Err(KmError::Config(format!("need 0 < alpha < gamma < beta, got {p:?}")));
        }
        if 2.0 * alpha >= beta - gamma {
            return Err(KmError::Config(format!("need 2 alpha < beta - gamma, got {p:?}")));
        }
        Ok(p)
    }

    /// Defaults scaled by the hyperbolic decay rate.
    pub fn for_rate(nu: f64) -> Self {
        WeightParams { alpha: 0.05 * nu, gamma: 0.1 * nu, beta: 0.25 * nu }
    }

    /// Rates must stay below half the decay rate of the hyperbolic block.
    pub fn check_rate(&self, nu: f64) -> Result<()> {
        if self.beta >= 0.5 * nu {
            return Err(KmError::Config(format!("beta {} must be below nu/2 = {}", self.beta, 0.5 * nu)));
        }
        Ok(())
    }

    pub fn doubled(&self) -> WeightParams {
        WeightParams { alpha: 2.0 * self.alpha, gamma: 2.0 * self.gamma, beta: 2.0 * self.beta }
    }
}

/// Fourth-order central differences; six-point one-sided stencils at the
/// two nodes nearest each edge.
pub fn derivative(f: &GridFunction) -> GridFunction {
    let m = f.nodes();
    let n = f.dim();
    let h = f.step();
    let mut out = GridFunction::zeros(f.half_width(), m, n).expect("valid grid");
    let d = 12.0 * h;
    for k in 0..n {
        let v = |i: usize| f.row(i)[k];
        for i in 0..m {
            let val = if i >= 2 && i + 2 < m {
                (-v(i + 2) + 8.0 * v(i + 1) - 8.0 * v(i - 1) + v(i - 2)) / d
            } else if i == 0 {
                edge(&|j| v(j), 0, m) / h
            } else if i == 1 {
                edge(&|j| v(j), 1, m) / h
            } else if i == m - 1 {
                -edge(&|j| v(m - 1 - j), 0, m) / h
            } else {
                -edge(&|j| v(m - 1 - j), 1, m) / h
            };
            out.row_mut(i)[k] = val;
        }
    }
    out
}

/// One-sided first derivative at offset 0 or 1 from the edge, times h.
/// Six points when available, five on the smallest grids.
fn edge(v: &dyn Fn(usize) -> f64, offset: usize, m: usize) -> f64 {
    const W0: [f64; 6] = [-137.0 / 60.0, 5.0, -5.0, 10.0 / 3.0, -1.25, 0.2];
    const W1: [f64; 6] = [-0.2, -13.0 / 12.0, 2.0, -1.0, 1.0 / 3.0, -0.05];
    const S0: [f64; 6] = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25, 0.0];
    const S1: [f64; 6] = [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0, 0.0];
    let w = match (offset, m >= 6) {
        (0, true) => &W0,
        (_, true) => &W1,
        (0, false) => &S0,
        _ => &S1,
    };
    (0..w.len().min(m)).map(|j| w[j] * v(j)).sum()
}

/// Trapezoid rule for samples on the grid of `f`.
fn trapezoid(f: &GridFunction, samples: impl Fn(usize) -> f64) -> f64 {
    let m = f.nodes();
    let mut s = 0.5 * (samples(0) + samples(m - 1));
    for i in 1..m - 1 {
        s += samples(i);
    }
    s * f.step()
}

fn sq_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum()
}

/// (int exp(-2 w |x|) |f|^2 dx)^{1/2}.
pub fn norm_l2w(f: &GridFunction, w: f64) -> f64 {
    trapezoid(f, |i| (-2.0 * w * f.x(i).abs()).exp() * sq_norm(f.row(i))).sqrt()
}

pub fn norm_h1w(f: &GridFunction, w: f64) -> f64 {
    let a = norm_l2w(f, w);
    let b = norm_l2w(&derivative(f), w);
    (a * a + b * b).sqrt()
}

/// Mixed norm: values at weight gamma, derivative at weight beta.
pub fn norm_z(f: &GridFunction, p: &WeightParams) -> f64 {
    norm_z_with(f, &derivative(f), p)
}

/// Same as `norm_z` with a precomputed derivative.
pub fn norm_z_with(f: &GridFunction, df: &GridFunction, p: &WeightParams) -> f64 {
    let a = norm_l2w(f, p.gamma);
    let b = norm_l2w(df, p.beta);
    (a * a + b * b).sqrt()
}

/// (exp(-a|.|) * exp(-b|.|))(x) by composite Simpson quadrature, split at
/// the two kinks and truncated where both factors are below e^-40.
pub fn exp_convolution(a: f64, b: f64, x: f64, panels: usize) -> f64 {
    let (lo, hi) = (x.min(0.0), x.max(0.0));
    let reach = 40.0 / a.min(b);
    let f = |y: f64| (-a * y.abs() - b * (x - y).abs()).exp();
    let panels = panels.max(2) & !1;
    let simpson = |s: f64, t: f64| {
        if t <= s {
            return 0.0;
        }
        let h = (t - s) / panels as f64;
        let mut acc = f(s) + f(t);
        for i in 1..panels {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(s + h * i as f64);
        }
        acc * h / 3.0
    };
    simpson(lo - reach, lo) + simpson(lo, hi) + simpson(hi, hi + reach)
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    /// max_x exp(-2 beta |x|) |f(x)|^2 / (exp(-(beta - gamma)|x|) |f|_Z^2)
    pub ratio: f64,
    /// Constant from the Cauchy-Schwarz argument.
    pub bound: f64,
}

pub fn embedding_bound(p: &WeightParams) -> f64 {
    2.0 * (2.0 * p.beta + 1.0).max(2.0)
}

pub fn sobolev_embedding_check(f: &GridFunction, p: &WeightParams) -> EmbeddingReport {
    let z = norm_z(f, p);
    let bound = embedding_bound(p);
    if z == 0.0 {
        return EmbeddingReport { ratio: 0.0, bound };
    }
    let ratio = (0..f.nodes())
        .map(|i| {
            let ax = f.x(i).abs();
            (-2.0 * p.beta * ax).exp() * sq_norm(f.row(i)) / ((-(p.beta - p.gamma) * ax).exp() * z * z)
        })
        .fold(0.0, f64::max);
    EmbeddingReport { ratio, bound }
}

/// A smooth pointwise map with its Jacobian, applied sample by sample.
pub trait SmoothMap {
    fn apply(&self, v: &[f64]) -> DVector<f64>;
    fn jacobian(&self, v: &[f64]) -> DMatrix<f64>;
}

/// v -> M v.
pub struct LinearMap(pub DMatrix<f64>);

impl SmoothMap for LinearMap {
    fn apply(&self, v: &[f64]) -> DVector<f64> {
        &self.0 * DVector::from_column_slice(v)
    }
    fn jacobian(&self, _v: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrechetSample {
    pub distance: f64,
    pub residual: f64,
}

/// Remainder of the first-order expansion of the substitution operator,
/// measured in Z at doubled rates, and the Z distance of the inputs.
pub fn substitution_frechet_check(map: &dyn SmoothMap, f0: &GridFunction, f: &GridFunction, p: &WeightParams) -> FrechetSample {
    assert!(f0.same_grid(f) && f0.dim() == f.dim());
    let out_dim = map.apply(f0.row(0)).len();
    let mut rem = GridFunction::zeros(f0.half_width(), f0.nodes(), out_dim).expect("valid grid");
    for i in 0..f0.nodes() {
        let a = f0.row(i);
        let b = f.row(i);
        let diff = DVector::from_iterator(a.len(), b.iter().zip(a).map(|(x, y)| x - y));
        let r = map.apply(b) - map.apply(a) - map.jacobian(a) * diff;
        rem.row_mut(i).copy_from_slice(r.as_slice());
    }
    FrechetSample { distance: norm_z(&f.sub(f0), p), residual: norm_z(&rem, &p.doubled()) }
}

/// Runs the check along f0 + t d and fits the remainder exponent.
pub fn frechet_exponent(
    map: &dyn SmoothMap,
    f0: &GridFunction,
    direction: &GridFunction,
    p: &WeightParams,
    scales: &[f64],
) -> (Vec<FrechetSample>, LineFit) {
    let samples: Vec<FrechetSample> = scales
        .iter()
        .map(|&t| substitution_frechet_check(map, f0, &f0.add(&direction.scale(t)), p))
        .collect();
    let d: Vec<f64> = samples.iter().map(|s| s.distance).collect();
    let r: Vec<f64> = samples.iter().map(|s| s.residual).collect();
    let fit = loglog_fit(&d, &r);
    (samples, fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_accuracy() {
        let lin = GridFunction::from_fn(3.0, 31, 1, |x| DVector::from_element(1, x)).unwrap();
        let d = derivative(&lin);
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let pi = std::f64::consts::PI;
        let s = GridFunction::from_fn(pi, 201, 1, |x| DVector::from_element(1, x.sin())).unwrap();
        let ds = derivative(&s);
        for i in 0..201 {
            assert!((ds.row(i)[0] - s.x(i).cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_weighted_norm() {
        let w = 0.5;
        let f = GridFunction::from_fn(20.0, 4001, 1, |_| DVector::from_element(1, 2.0)).unwrap();
        let n2 = norm_l2w(&f, w).powi(2);
        assert!((n2 - 4.0 / w).abs() / (4.0 / w) < 0.01);
    }

    #[test]
    fn param_rules() {
        assert!(WeightParams::new(0.1, 0.2, 0.5).is_ok());
        assert!(WeightParams::new(0.2, 0.1, 0.5).is_err());
        assert!(WeightParams::new(0.2, 0.3, 0.5).is_err());
        let d = WeightParams::for_rate(1.0);
        assert!(WeightParams::new(d.alpha, d.gamma, d.beta).is_ok());
    }
}
