//! Heteroclinic boundary value problems M y' = F(y) on [-L, L], discretized
//! with trapezoid collocation and solved by damped Newton on a banded system.

use nalgebra::{DMatrix, DVector};

use crate::error::{KmError, Result};
use crate::grid::GridFunction;
use crate::numerics::BandMatrix;

/// Linear rows `rows * (y - target) = 0` imposed at one node.
#[derive(Debug, Clone)]
pub struct NodeCondition {
    pub rows: DMatrix<f64>,
    pub target: DVector<f64>,
}

impl NodeCondition {
    pub fn none(dim: usize) -> Self {
        NodeCondition { rows: DMatrix::zeros(0, dim), target: DVector::zeros(dim) }
    }
}

pub struct HeteroclinicProblem<'a> {
    pub mass: DMatrix<f64>,
    pub field: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    pub jacobian: &'a dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    /// Imposed at the first node.
    pub left: NodeCondition,
    /// Imposed at the last node.
    pub right: NodeCondition,
    /// Extra rows at the first node, e.g. conserved quantities.
    pub constraints: NodeCondition,
    /// Phase condition at the center node.
    pub phase: NodeCondition,
}

#[derive(Debug, Clone)]
pub struct BvpReport {
    pub iterations: usize,
    pub residual: f64,
}

struct Layout {
    n: usize,
    m: usize,
    head: usize,
    phase: usize,
}

impl Layout {
    /// Row where the collocation block of interval k starts.
    fn interval_row(&self, k: usize) -> usize {
        let c = self.m / 2;
        self.head + k * self.n + if k >= c { self.phase } else { 0 }
    }
}

fn residual(problem: &HeteroclinicProblem, lay: &Layout, h: f64, y: &[f64], out: &mut [f64]) {
    let n = lay.n;
    let node = |i: usize| DVector::from_column_slice(&y[i * n..(i + 1) * n]);
    let cond = |c: &NodeCondition, v: &DVector<f64>| &c.rows * (v - &c.target);
    let y0 = node(0);
    let mut row = 0;
    for v in cond(&problem.left, &y0).iter().chain(cond(&problem.constraints, &y0).iter()) {
        out[row] = *v;
        row += 1;
    }
    let mut f_prev = (problem.field)(&y0);
    for k in 0..lay.m - 1 {
        let (a, b) = (node(k), node(k + 1));
        let f_next = (problem.field)(&b);
        let r = &problem.mass * (&b - &a) - (&f_prev + &f_next) * (0.5 * h);
        let start = lay.interval_row(k);
        out[start..start + n].copy_from_slice(r.as_slice());
        f_prev = f_next;
    }
    let c = lay.m / 2;
    let ph = cond(&problem.phase, &node(c));
    let start = lay.interval_row(c) - lay.phase;
    out[start..start + lay.phase].copy_from_slice(ph.as_slice());
    let yl = node(lay.m - 1);
    let tail = cond(&problem.right, &yl);
    let start = lay.m * n - tail.len();
    out[start..].copy_from_slice(tail.as_slice());
}

fn jacobian(problem: &HeteroclinicProblem, lay: &Layout, h: f64, y: &[f64], kl: usize, ku: usize) -> Result<BandMatrix> {
    let n = lay.n;
    let total = lay.m * n;
    let mut jac = BandMatrix::new(total, kl, ku);
    let node = |i: usize| DVector::from_column_slice(&y[i * n..(i + 1) * n]);
    let mut row = 0;
    for c in [&problem.left, &problem.constraints] {
        for i in 0..c.rows.nrows() {
            for j in 0..n {
                jac.add(row, j, c.rows[(i, j)]);
            }
            row += 1;
        }
    }
    let mut j_prev = (problem.jacobian)(&node(0));
    for k in 0..lay.m - 1 {
        let j_next = (problem.jacobian)(&node(k + 1));
        let start = lay.interval_row(k);
        for i in 0..n {
            for j in 0..n {
                jac.add(start + i, k * n + j, -problem.mass[(i, j)] - 0.5 * h * j_prev[(i, j)]);
                jac.add(start + i, (k + 1) * n + j, problem.mass[(i, j)] - 0.5 * h * j_next[(i, j)]);
            }
        }
        j_prev = j_next;
    }
    let c = lay.m / 2;
    let start = lay.interval_row(c) - lay.phase;
    for i in 0..lay.phase {
        for j in 0..n {
            jac.add(start + i, c * n + j, problem.phase.rows[(i, j)]);
        }
    }
    let rr = problem.right.rows.nrows();
    for i in 0..rr {
        for j in 0..n {
            jac.add(total - rr + i, (lay.m - 1) * n + j, problem.right.rows[(i, j)]);
        }
    }
    jac.factor()?;
    Ok(jac)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the problem on the grid of `guess`, which also seeds Newton.
pub fn solve_heteroclinic(problem: &HeteroclinicProblem, guess: &GridFunction) -> Result<(GridFunction, BvpReport)> {
    let n = problem.mass.nrows();
    let m = guess.nodes();
    if guess.dim() != n {
        return Err(KmError::Dimension("guess dimension differs from the system".into()));
    }
    let head = problem.left.rows.nrows() + problem.constraints.rows.nrows();
    let lay = Layout { n, m, head, phase: problem.phase.rows.nrows() };
    let rows = head + (m - 1) * n + lay.phase + problem.right.rows.nrows();
    if rows != m * n {
        return Err(KmError::Config(format!(
            "boundary conditions give {} rows for {} unknowns",
            rows,
            m * n
        )));
    }
    // widest coupling: collocation rows shifted by the head rows and the phase row
    let kl = head.max(n) + n + lay.phase;
    let ku = 2 * n + lay.phase;
    let h = guess.step();
    let mut y = guess.values().to_vec();
    let mut res = vec![0.0; m * n];
    residual(problem, &lay, h, &y, &mut res);
    let mut rnorm = inf_norm(&res);
    let scale = 1.0 + inf_norm(&y);
    for it in 0..40 {
        if rnorm <= 1e-15 * scale {
            return finish(guess, y, it, rnorm);
        }
        let jac = jacobian(problem, &lay, h, &y, kl, ku)?;
        let mut step: Vec<f64> = res.iter().map(|v| -v).collect();
        jac.solve(&mut step);
        let snorm = inf_norm(&step);
        let mut t = 1.0;
        let mut trial = vec![0.0; m * n];
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..y.len() {
                trial[i] = y[i] + t * step[i];
            }
            residual(problem, &lay, h, &trial, &mut res);
            let tn = inf_norm(&res);
            if tn.is_finite() && tn < rnorm.max(1e-300) * (1.0 - 1e-4 * t) || tn <= 1e-15 * scale {
                y.copy_from_slice(&trial);
                rnorm = tn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            residual(problem, &lay, h, &y, &mut res);
            if snorm <= 1e-12 * scale {
                return finish(guess, y, it, rnorm);
            }
            return Err(KmError::Newton(format!("line search stalled at residual {rnorm:.3e}")));
        }
        if t == 1.0 && snorm <= 1e-13 * scale {
            return finish(guess, y, it + 1, rnorm);
        }
    }
    Err(KmError::Newton(format!("no convergence, residual {rnorm:.3e}")))
}

fn finish(guess: &GridFunction, y: Vec<f64>, iterations: usize, residual: f64) -> Result<(GridFunction, BvpReport)> {
    let g = GridFunction::from_values(guess.half_width(), guess.nodes(), guess.dim(), y)?;
    Ok((g, BvpReport { iterations, residual }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_tanh_front() {
        // y' = (y^2 - 1)/2 has the heteroclinic y = -tanh(x/2)
        let field = |y: &DVector<f64>| DVector::from_element(1, 0.5 * (y[0] * y[0] - 1.0));
        let jac = |y: &DVector<f64>| DMatrix::from_element(1, 1, y[0]);
        let problem = HeteroclinicProblem {
            mass: DMatrix::identity(1, 1),
            field: &field,
            jacobian: &jac,
            left: NodeCondition::none(1),
            right: NodeCondition::none(1),
            constraints: NodeCondition::none(1),
            phase: NodeCondition { rows: DMatrix::identity(1, 1), target: DVector::zeros(1) },
        };
        let guess = GridFunction::from_fn(30.0, 1201, 1, |x| DVector::from_element(1, -(x / 3.0).tanh())).unwrap();
        let (sol, rep) = solve_heteroclinic(&problem, &guess).unwrap();
        assert!(rep.residual < 1e-13);
        let err = (0..sol.nodes()).map(|i| (sol.row(i)[0] + (sol.x(i) / 2.0).tanh()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "err {err}");
    }
}
