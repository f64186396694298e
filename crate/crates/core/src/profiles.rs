//! Small-amplitude shock profiles: the relaxation profile on the center
//! manifold, the second-order Chapman-Enskog profile, the Burgers reference
//! and the comparisons between them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bvp::{solve_heteroclinic, HeteroclinicProblem, NodeCondition};
use crate::chapman::{classify, rankine_hugoniot, CaseTag, ChapmanEnskog, Classification, ShockData, CLASSIFY_TOL};
use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::linear::{build_decomposition, Decomposition};
use crate::manifold::{taylor_expand, CenterManifoldExpansion};
use crate::model::KineticModel;
use crate::numerics::{dichotomy_projections, dopri5, line_fit, loglog_fit, row_basis, LineFit, OdeOptions};
use crate::weighted::derivative;

/// eta(x) = -eps tanh(Lambda eps x / (2 kappa)).
pub fn burgers_exact(eps: f64, lambda: f64, kappa: f64, x: f64) -> f64 {
    -eps * (lambda * eps * x / (2.0 * kappa)).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileConfig {
    /// Order of the manifold expansion.
    pub order: usize,
    pub nodes: usize,
    /// Relative distance to the endstates reached at the grid edges.
    pub tail: f64,
    /// Overrides the half-width derived from `tail`.
    pub half_width: Option<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { order: 3, nodes: 4001, tail: 1e-6, half_width: None }
    }
}

impl ProfileConfig {
    /// Half-width where the Burgers profile is within `tail * eps` of its limits.
    pub fn half_width_for(&self, eps: f64, lambda: f64, kappa: f64) -> f64 {
        self.half_width
            .unwrap_or_else(|| kappa * (2.0 / self.tail).ln() / (lambda.abs() * eps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Relaxation,
    ChapmanEnskog,
    Burgers,
}

impl ProfileKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProfileKind::Relaxation => "relaxation",
            ProfileKind::ChapmanEnskog => "chapman_enskog",
            ProfileKind::Burgers => "burgers",
        }
    }
}

/// A standing profile sampled on a grid.
#[derive(Debug, Clone)]
pub struct Profile {
    pub kind: ProfileKind,
    pub eps: f64,
    /// Full state in frame coordinates, as a deviation from u_bar.
    pub state: GridFunction,
    /// Amplitude along r_bar.
    pub u1: Vec<f64>,
    /// Characteristic speed of the kernel part at each node.
    pub speed: Vec<f64>,
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
    pub q: DVector<f64>,
    p: usize,
}

impl Profile {
    pub fn kernel_part(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.state.row(i)[..self.p])
    }

    pub fn complement_part(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.state.row(i)[self.p..])
    }

    /// Kernel components as a grid function.
    pub fn kernel_grid(&self) -> GridFunction {
        self.state.map_nodes(self.p, |_, row| DVector::from_column_slice(&row[..self.p]))
    }

    /// Absolute ambient state u_bar + w at each node.
    pub fn ambient(&self, model: &KineticModel, dec: &Decomposition) -> GridFunction {
        self.state
            .map_nodes(model.dim, |_, row| &model.u_bar + dec.from_coords(&DVector::from_column_slice(row)))
    }

    /// Smallest |speed step| over the largest, signed by the direction; zero
    /// or negative means the speed is not strictly monotone.
    pub fn monotone_margin(&self) -> f64 {
        let diffs: Vec<f64> = self.speed.windows(2).map(|w| w[1] - w[0]).collect();
        let dir = (self.speed[self.speed.len() - 1] - self.speed[0]).signum();
        let largest = diffs.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
        if largest == 0.0 {
            return 0.0;
        }
        diffs.iter().map(|d| d * dir).fold(f64::INFINITY, f64::min) / largest
    }

    /// Columns x, u1, lambda (the characteristic speed), then the absolute
    /// ambient state w_1..w_n.
    pub fn to_csv(&self, model: &KineticModel, dec: &Decomposition) -> String {
        let amb = self.ambient(model, dec);
        let mut out = String::from("x, u1, lambda");
        for k in 1..=model.dim {
            out.push_str(&format!(", w_{k}"));
        }
        out.push('\n');
        for i in 0..self.state.nodes() {
            out.push_str(&crate::grid::format_float(self.state.x(i)));
            for v in [self.u1[i], self.speed[i]].iter().chain(amb.row(i)) {
                out.push_str(", ");
                out.push_str(&crate::grid::format_float(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind.label(),
            "eps": self.eps,
            "half_width": self.state.half_width(),
            "nodes": self.state.nodes(),
            "u_minus": self.u_minus.as_slice(),
            "u_plus": self.u_plus.as_slice(),
            "flux_level": self.q.as_slice(),
            "u1_range": [self.u1[0], self.u1[self.u1.len() - 1]],
            "speed_monotone_margin": self.monotone_margin(),
        })
    }
}

/// Shared data for profile computations on one model.
pub struct ShockSetup<'a> {
    pub model: &'a KineticModel,
    pub dec: &'a Decomposition,
    pub cls: &'a Classification,
}

impl<'a> ShockSetup<'a> {
    fn check(&self) -> Result<()> {
        if self.cls.case != CaseTag::SimpleGnl {
            return Err(KmError::InvalidModel(format!(
                "profiles need a simple genuinely nonlinear field, found {}",
                self.cls.case.label()
            )));
        }
        Ok(())
    }

    fn grid(&self, eps: f64, cfg: &ProfileConfig) -> Result<GridFunction> {
        let l = cfg.half_width_for(eps, self.cls.lambda, self.cls.kappa_scalar());
        GridFunction::zeros(l, cfg.nodes, self.dec.dims.n)
    }

    fn ce(&self) -> ChapmanEnskog<'a> {
        ChapmanEnskog::new(self.model, self.dec)
    }

    /// Full coordinate state (u, v*(u)).
    fn equilibrium_state(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let ce = self.ce();
        Ok(ce.stack(u, &ce.equilibrium_graph(u)?))
    }

    fn finish(&self, kind: ProfileKind, eps: f64, state: GridFunction, rh: &ShockData, ends: (DVector<f64>, DVector<f64>)) -> Result<Profile> {
        let p = self.dec.dims.kernel;
        let ce = self.ce();
        let mut u1 = Vec::with_capacity(state.nodes());
        let mut speed = Vec::with_capacity(state.nodes());
        for i in 0..state.nodes() {
            let u = DVector::from_column_slice(&state.row(i)[..p]);
            u1.push(self.cls.r_bar_coords.dot(&u));
            speed.push(ce.characteristic_speed(&u)?);
        }
        Ok(Profile { kind, eps, state, u1, speed, u_minus: ends.0, u_plus: ends.1, q: rh.q.clone(), p })
    }
}

/// Scalar Newton on a fiber coordinate with a centered difference slope.
fn scalar_root(f: &dyn Fn(f64) -> f64, mut x: f64, scale: f64) -> Result<f64> {
    let h = 1e-6 * scale;
    for _ in 0..80 {
        let fx = f(x);
        let d = (f(x + h) - f(x - h)) / (2.0 * h);
        if d == 0.0 || !d.is_finite() {
            return Err(KmError::Newton("flat fiber field".into()));
        }
        let step = fx / d;
        x -= step;
        if step.abs() <= 1e-15 * scale {
            return Ok(x);
        }
    }
    Err(KmError::Newton("fiber equilibrium did not converge".into()))
}

/// Bisection for g(x) = 0 on a bracket.
fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 || (hi - lo).abs() <= 1e-16 * (lo.abs() + hi.abs()) {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Profile of the full system on the expanded center manifold.
///
/// The flux level fixes the conserved center slots; the remaining fiber
/// coordinate solves a scalar ODE whose zeros are the endstates.
pub fn relaxation_profile(setup: &ShockSetup, exp: &CenterManifoldExpansion, eps: f64, cfg: &ProfileConfig) -> Result<Profile> {
    setup.check()?;
    if exp.frame.r != 1 {
        return Err(KmError::InvalidModel("relaxation profiles need a simple kernel".into()));
    }
    let rh = rankine_hugoniot(setup.model, setup.dec, setup.cls, eps)?;
    let mut grid = setup.grid(eps, cfg)?;
    let p = setup.dec.dims.kernel;
    let frame = &exp.frame;
    let (b, cc) = frame.fiber_constants(&rh.q);
    let point = |a: f64| frame.center_point(&DVector::from_element(1, a), &b, &cc);
    let field = |a: f64| exp.reduced_field(&point(a))[0];
    let amp = |a: f64| setup.cls.r_bar_coords.dot(&exp.lift(&point(a)).rows(0, p).into_owned());
    if eps == 0.0 {
        let z = DVector::zeros(p);
        return setup.finish(ProfileKind::Relaxation, eps, grid, &rh, (z.clone(), z));
    }
    let align = setup.cls.r_bar_coords[0].signum();
    let sign = setup.cls.lambda.signum();
    let a_minus = scalar_root(&field, align * sign * eps, eps)?;
    let a_plus = scalar_root(&field, -align * sign * eps, eps)?;
    if (a_minus - a_plus).abs() < 0.5 * eps {
        return Err(KmError::Newton("fiber endstates coincide".into()));
    }
    let mid = 0.5 * (amp(a_minus) + amp(a_plus));
    let a0 = bisect(&|a| amp(a) - mid, a_minus, a_plus);
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-16 * eps, max_steps: 2_000_000 };
    let rhs = |y: &[f64], dy: &mut [f64]| dy[0] = field(y[0]);
    let c = grid.center();
    let m = grid.nodes();
    let right: Vec<f64> = (c + 1..m).map(|i| grid.x(i)).collect();
    let left: Vec<f64> = (0..c).rev().map(|i| grid.x(i)).collect();
    let ys_r = dopri5(rhs, 0.0, &[a0], &right, opts)?;
    let ys_l = dopri5(rhs, 0.0, &[a0], &left, opts)?;
    let mut fiber = vec![0.0; m];
    fiber[c] = a0;
    for (k, y) in ys_r.iter().enumerate() {
        fiber[c + 1 + k] = y[0];
    }
    for (k, y) in ys_l.iter().enumerate() {
        fiber[c - 1 - k] = y[0];
    }
    for (i, &a) in fiber.iter().enumerate() {
        grid.row_mut(i).copy_from_slice(exp.lift(&point(a)).as_slice());
    }
    let ends = (exp.lift(&point(a_minus)).rows(0, p).into_owned(), exp.lift(&point(a_plus)).rows(0, p).into_owned());
    setup.finish(ProfileKind::Relaxation, eps, grid, &rh, ends)
}

/// Smooth step from 1 at -inf to 0 at +inf with the Burgers width.
fn burgers_weight(setup: &ShockSetup, eps: f64, x: f64) -> f64 {
    0.5 * (1.0 - (setup.cls.lambda.abs() * eps * x / (2.0 * setup.cls.kappa_scalar())).tanh())
}

/// Heteroclinic of D* u' = f*(u) - q between the Rankine-Hugoniot endstates.
pub fn ce2_profile(setup: &ShockSetup, eps: f64, cfg: &ProfileConfig) -> Result<Profile> {
    setup.check()?;
    let rh = rankine_hugoniot(setup.model, setup.dec, setup.cls, eps)?;
    let grid = setup.grid(eps, cfg)?;
    let p = setup.dec.dims.kernel;
    let ce = setup.ce();
    let ends = (rh.u_minus.clone(), rh.u_plus.clone());
    if eps == 0.0 {
        return setup.finish(ProfileKind::ChapmanEnskog, eps, grid, &rh, ends);
    }
    let d = ce.viscosity();
    let d_inv = crate::numerics::inverse(&d)?;
    let field = |u: &DVector<f64>| ce.flux(u).expect("profile stays in the basin") - &rh.q;
    let jac = |u: &DVector<f64>| ce.flux_jacobian_at(u).expect("profile stays in the basin");
    let (ps, _) = dichotomy_projections(&(&d_inv * ce.flux_jacobian_at(&rh.u_minus)?))?;
    let (_, pu) = dichotomy_projections(&(&d_inv * ce.flux_jacobian_at(&rh.u_plus)?))?;
    let r = &setup.cls.r_bar_coords;
    let mid = 0.5 * (r.dot(&rh.u_minus) + r.dot(&rh.u_plus));
    let problem = HeteroclinicProblem {
        mass: d,
        field: &field,
        jacobian: &jac,
        left: NodeCondition { rows: row_basis(&ps, 1e-8), target: rh.u_minus.clone() },
        right: NodeCondition { rows: row_basis(&pu, 1e-8), target: rh.u_plus.clone() },
        constraints: NodeCondition::none(p),
        phase: NodeCondition { rows: DMatrix::from_row_slice(1, p, r.as_slice()), target: r * mid },
    };
    let guess = GridFunction::from_fn(grid.half_width(), grid.nodes(), p, |x| {
        &rh.u_plus + (&rh.u_minus - &rh.u_plus) * burgers_weight(setup, eps, x)
    })?;
    let (sol, _) = solve_heteroclinic(&problem, &guess)?;
    let mut state = grid;
    for i in 0..sol.nodes() {
        let full = setup.equilibrium_state(&sol.value(i))?;
        state.row_mut(i).copy_from_slice(full.as_slice());
    }
    setup.finish(ProfileKind::ChapmanEnskog, eps, state, &rh, ends)
}

/// Burgers reference along r_bar, lifted to the equilibrium manifold.
pub fn burgers_profile(setup: &ShockSetup, eps: f64, cfg: &ProfileConfig) -> Result<Profile> {
    setup.check()?;
    let rh = rankine_hugoniot(setup.model, setup.dec, setup.cls, eps)?;
    let mut grid = setup.grid(eps, cfg)?;
    let (lambda, kappa) = (setup.cls.lambda, setup.cls.kappa_scalar());
    let r = &setup.cls.r_bar_coords;
    for i in 0..grid.nodes() {
        let u = r * burgers_exact(eps, lambda, kappa, grid.x(i));
        let full = setup.equilibrium_state(&u)?;
        grid.row_mut(i).copy_from_slice(full.as_slice());
    }
    let sign = lambda.signum();
    let ends = (r * (sign * eps), r * (-sign * eps));
    setup.finish(ProfileKind::Burgers, eps, grid, &rh, ends)
}

/// Decay rate of |u1 - limit| on the far tails, from a log-linear fit on
/// the samples between `lo` and `hi` relative to eps.
pub fn tail_rate(profile: &Profile, lo: f64, hi: f64) -> Option<f64> {
    let n = profile.u1.len();
    let c = n / 2;
    let eps = profile.eps;
    let fit_side = |idx: Vec<usize>, limit: f64| -> Option<f64> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in idx {
            let d = (profile.u1[i] - limit).abs();
            if d > lo * eps && d < hi * eps {
                xs.push(profile.state.x(i).abs());
                ys.push(d.ln());
            }
        }
        (xs.len() >= 5).then(|| -line_fit(&xs, &ys).slope)
    };
    let r = &profile.u1;
    let right = fit_side((c..n).collect(), r[n - 1]);
    let left = fit_side((0..=c).collect(), r[0]);
    match (left, right) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Metrics between a relaxation profile and a Chapman-Enskog profile on the
/// same grid.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileComparison {
    pub eps: f64,
    /// sup |u_REL - u_CE| over the kernel components.
    pub sup_u: f64,
    /// Same for the first derivative.
    pub sup_du: f64,
    /// Weight rate used below: half the fitted tail rate.
    pub weight_rate: f64,
    pub weighted_u: f64,
    pub weighted_du: f64,
    /// sup |v_REL - v*(u_CE)|.
    pub sup_v: f64,
    /// sup of |u_REL - u_limit| e^{rate |x|} over each half line.
    pub tail_amplitude: f64,
    /// max over both endstates of |u1 -/+ eps|.
    pub endstate_error: f64,
    /// sup |u1_REL - eta| and sup |u1_CE - eta| against the Burgers profile.
    pub burgers_relaxation: f64,
    pub burgers_ce: f64,
    pub relaxation_monotone_margin: f64,
}

fn kernel_derivative(p: &Profile) -> GridFunction {
    derivative(&p.kernel_grid())
}

pub fn compare_profiles(setup: &ShockSetup, rel: &Profile, ce: &Profile) -> Result<ProfileComparison> {
    if !rel.state.same_grid(&ce.state) || rel.eps != ce.eps {
        return Err(KmError::Config("profiles live on different grids".into()));
    }
    let eps = rel.eps;
    let n = rel.state.nodes();
    let du = kernel_derivative(rel).sub(&kernel_derivative(ce));
    let rate = 0.5 * tail_rate(ce, 1e-5, 1e-2).unwrap_or(0.0);
    let (mut sup_u, mut sup_du, mut wu, mut wdu, mut sup_v, mut tail) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let c = n / 2;
    for i in 0..n {
        let x = rel.state.x(i);
        let w = (rate * x.abs()).exp();
        let d = (rel.kernel_part(i) - ce.kernel_part(i)).norm();
        let dd = DVector::from_column_slice(du.row(i)).norm();
        sup_u = sup_u.max(d);
        sup_du = sup_du.max(dd);
        wu = wu.max(d * w);
        wdu = wdu.max(dd * w);
        sup_v = sup_v.max((rel.complement_part(i) - ce.complement_part(i)).norm());
        let limit = if i >= c { &rel.u_plus } else { &rel.u_minus };
        tail = tail.max((rel.kernel_part(i) - limit).norm() * w);
    }
    let r = &setup.cls.r_bar_coords;
    let sign = setup.cls.lambda.signum();
    let endstate_error = (r.dot(&ce.u_minus) - sign * eps).abs().max((r.dot(&ce.u_plus) + sign * eps).abs());
    let (lambda, kappa) = (setup.cls.lambda, setup.cls.kappa_scalar());
    let burgers = |p: &Profile| {
        (0..n)
            .map(|i| (p.u1[i] - burgers_exact(eps, lambda, kappa, p.state.x(i))).abs())
            .fold(0.0, f64::max)
    };
    Ok(ProfileComparison {
        eps,
        sup_u,
        sup_du,
        weight_rate: rate,
        weighted_u: wu,
        weighted_du: wdu,
        sup_v,
        tail_amplitude: tail,
        endstate_error,
        burgers_relaxation: burgers(rel),
        burgers_ce: burgers(ce),
        relaxation_monotone_margin: rel.monotone_margin(),
    })
}

/// Comparison metrics over a list of amplitudes with log-log slopes.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<ProfileComparison>,
    pub slopes: BTreeMap<String, f64>,
    pub fit_residuals: BTreeMap<String, f64>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "eps,sup_u,sup_du,weighted_u,weighted_du,sup_v,tail_amplitude,endstate_error,burgers_relaxation,burgers_ce,monotone_margin\n",
        );
        for r in &self.rows {
            let vals = [
                r.eps,
                r.sup_u,
                r.sup_du,
                r.weighted_u,
                r.weighted_du,
                r.sup_v,
                r.tail_amplitude,
                r.endstate_error,
                r.burgers_relaxation,
                r.burgers_ce,
                r.relaxation_monotone_margin,
            ];
            let line: Vec<String> = vals.iter().map(|v| crate::grid::format_float(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn metric_columns(rows: &[ProfileComparison]) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("sup_u", rows.iter().map(|r| r.sup_u).collect()),
        ("sup_du", rows.iter().map(|r| r.sup_du).collect()),
        ("weighted_u", rows.iter().map(|r| r.weighted_u).collect()),
        ("weighted_du", rows.iter().map(|r| r.weighted_du).collect()),
        ("sup_v", rows.iter().map(|r| r.sup_v).collect()),
        ("tail_amplitude", rows.iter().map(|r| r.tail_amplitude).collect()),
        ("endstate_error", rows.iter().map(|r| r.endstate_error).collect()),
        ("burgers_relaxation", rows.iter().map(|r| r.burgers_relaxation).collect()),
        ("burgers_ce", rows.iter().map(|r| r.burgers_ce).collect()),
    ]
}

/// Relaxation vs Chapman-Enskog comparison for each amplitude. Rows keep
/// the order of `eps_list` whatever the thread count.
pub fn epsilon_sweep(model: &KineticModel, eps_list: &[f64], cfg: &ProfileConfig, jobs: usize) -> Result<SweepReport> {
    if eps_list.len() < 2 || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(KmError::Config("need at least two positive amplitudes".into()));
    }
    let dec = build_decomposition(model)?;
    let cls = classify(model, &dec, CLASSIFY_TOL)?;
    let exp = taylor_expand(&dec, model, cfg.order)?;
    let setup = ShockSetup { model, dec: &dec, cls: &cls };
    setup.check()?;
    let run = |eps: f64| -> Result<ProfileComparison> {
        let rel = relaxation_profile(&setup, &exp, eps, cfg)?;
        let ce = ce2_profile(&setup, eps, cfg)?;
        compare_profiles(&setup, &rel, &ce)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| KmError::Config(e.to_string()))?;
    let rows: Vec<ProfileComparison> =
        pool.install(|| eps_list.par_iter().map(|&e| run(e)).collect::<Result<Vec<_>>>())?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let mut slopes = BTreeMap::new();
    let mut fit_residuals = BTreeMap::new();
    for (name, col) in metric_columns(&rows) {
        if col.iter().all(|v| *v > 0.0) {
            let LineFit { slope, rms_residual, .. } = loglog_fit(&eps, &col);
            slopes.insert(name.to_string(), slope);
            fit_residuals.insert(name.to_string(), rms_residual);
        }
    }
    Ok(SweepReport { rows, slopes, fit_residuals })
}

/// Behavior of the kernel fiber field at one flux level.
#[derive(Debug, Clone, Serialize)]
pub struct FiberSample {
    pub flux_level: f64,
    pub max_field: f64,
    pub min_field: f64,
    /// "equilibria" when the field vanishes on the ball, "transit" when it
    /// keeps one sign, "mixed" otherwise.
    pub verdict: String,
    /// Times to cross the right and left halves of the ball.
    pub exit_times: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdgReport {
    pub radius: f64,
    pub samples: Vec<FiberSample>,
}

/// Samples the kernel fiber field on |a| <= radius for each flux level
/// q1 r_bar and classifies the dynamics.
pub fn ldg_fiber_check(
    model: &KineticModel,
    dec: &Decomposition,
    cls: &Classification,
    levels: &[f64],
    radius: f64,
    order: usize,
) -> Result<LdgReport> {
    if !matches!(cls.case, CaseTag::LinearlyDegenerate(_)) {
        return Err(KmError::NotLinearlyDegenerate);
    }
    let exp = taylor_expand(dec, model, order)?;
    if exp.frame.r != 1 {
        return Err(KmError::InvalidModel("fiber check is implemented for a simple kernel".into()));
    }
    let mut samples = Vec::new();
    for &q1 in levels {
        let q = &cls.r_bar_coords * q1;
        let (b, cc) = exp.frame.fiber_constants(&q);
        let field = |a: f64| exp.reduced_field(&exp.frame.center_point(&DVector::from_element(1, a), &b, &cc))[0];
        let vals: Vec<f64> = (0..=200).map(|i| field(radius * (-1.0 + i as f64 / 100.0))).collect();
        let max_field = vals.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let min_field = vals.iter().fold(f64::INFINITY, |m: f64, v| m.min(v.abs()));
        let one_sign = vals.iter().all(|v| *v > 0.0) || vals.iter().all(|v| *v < 0.0);
        let (verdict, exit_times) = if max_field <= 1e-10 {
            ("equilibria", None)
        } else if one_sign {
            // transit time from the center to each edge: integral of da / F
            let quad = |lo: f64, hi: f64| {
                let k = 2000;
                let h = (hi - lo) / k as f64;
                (0..k)
                    .map(|i| {
                        let a = lo + (i as f64 + 0.5) * h;
                        h / field(a)
                    })
                    .sum::<f64>()
            };
            ("transit", Some((quad(0.0, radius).abs(), quad(-radius, 0.0).abs())))
        } else {
            ("mixed", None)
        };
        samples.push(FiberSample { flux_level: q1, max_field, min_field, verdict: verdict.into(), exit_times });
    }
    Ok(LdgReport { radius, samples })
}
