//! Dense and banded linear algebra helpers, an adaptive Runge-Kutta driver
//! and least-squares fits shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{KmError, Result};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (j, v)| if v.abs() > acc.1 + 1e-12 { (j, v.abs()) } else { acc });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(k, &col);
    }
    (vals, vecs)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis of the column space, rank decided by `rel_tol * sigma_max`.
pub fn column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Orthonormal basis of the orthogonal complement of an orthonormal set.
pub fn orth_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    let (vals, vecs) = sym_eigen_sorted(&proj);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.5).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vecs.column(i));
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis of the null space, rank decided by `rel_tol * sigma_max`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let c = m.ncols();
    let r = m.nrows().max(c);
    let mut sq = DMatrix::zeros(r, c);
    sq.view_mut((0, 0), (m.nrows(), c)).copy_from(m);
    let svd = SVD::new(sq, false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= rel_tol * smax.max(f64::MIN_POSITIVE))
        .collect();
    let mut out = DMatrix::zeros(c, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| KmError::Numeric("singular matrix".into()))
}

/// Matrix sign function by scaled Newton iteration; `m` must have no
/// eigenvalues on the imaginary axis.
pub fn matrix_sign(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut x = m.clone();
    for it in 0..100 {
        let xi = inverse(&x)?;
        let det = x.clone().lu().determinant().abs();
        let mu = if it < 20 && det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&x * mu + &xi / mu) * 0.5;
        let diff = (&next - &x).norm();
        let scale = next.norm();
        x = next;
        if diff <= 1e-14 * scale {
            return Ok(x);
        }
    }
    Err(KmError::Numeric("matrix sign iteration did not converge".into()))
}

/// Spectral projections onto the stable and unstable invariant subspaces of a
/// matrix without imaginary-axis spectrum.
pub fn dichotomy_projections(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let s = matrix_sign(m)?;
    let id = DMatrix::identity(n, n);
    Ok(((&id - &s) * 0.5, (&id + &s) * 0.5))
}

/// Orthonormal basis of the row space of `m`, as rows.
pub fn row_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    column_basis(&m.transpose(), rel_tol).transpose()
}

/// Banded matrix with LU factorization and partial pivoting.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n], factored: false }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        c * self.ldab + (self.kl + self.ku + r - c)
    }

    /// Adds `v` to entry (r, c); the entry must lie inside the band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c <= r + self.ku && r <= c + self.kl,
            "entry ({r}, {c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let i = self.idx(r, c);
        self.ab[i] += v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.ab[self.idx(r, c)]
    }

    fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let i = self.idx(r, c);
        &mut self.ab[i]
    }

    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = 0.0;
            for i in 0..=km {
                let v = self.get(j + i, j).abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(KmError::Numeric(format!("singular banded system at column {j}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.get(j, j);
            for i in 1..=km {
                *self.get_mut(j + i, j) /= piv;
            }
            for c in (j + 1)..=ju {
                let u = self.get(j, c);
                if u != 0.0 {
                    for i in 1..=km {
                        let l = self.get(j + i, j);
                        *self.get_mut(j + i, c) -= l * u;
                    }
                }
            }
            debug_assert!(ju <= j + kv);
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored);
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            for i in 1..=km {
                b[j + i] -= self.get(j + i, j) * b[j];
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.get(j, j);
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= self.get(i, j) * b[j];
            }
        }
    }
}

/// Result of a least-squares line fit.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    LineFit { slope, intercept, rms_residual: (rss / n).sqrt() }
}

/// Slope of log(y) against log(x).
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    line_fit(&lx, &ly)
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Tolerances and limits for [`dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-14, max_steps: 1_000_000 }
    }
}

/// Integrates the autonomous system y' = f(y) and returns the state at each
/// output time. Output times must be monotone away from `t0`.
pub fn dopri5<F>(f: F, t0: f64, y0: &[f64], t_out: &[f64], opts: OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(t_out.len());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    let mut h: f64 = 0.0;
    let mut steps = 0usize;
    f(&y, &mut k[0]);
    for &target in t_out {
        let dir = if target >= t { 1.0 } else { -1.0 };
        if h == 0.0 {
            let scale: f64 = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).fold(f64::INFINITY, f64::min);
            let fnorm: f64 = k[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
            h = if fnorm > 0.0 { (0.01 * scale / fnorm).max(1e-6) } else { 1e-3 };
        }
        while (target - t) * dir > 1e-14 * (1.0 + t.abs()) {
            steps += 1;
            if steps > opts.max_steps {
                return Err(KmError::Numeric("ode step limit exceeded".into()));
            }
            let mut hs = h.abs().min((target - t).abs()) * dir;
            loop {
                for s in 1..7 {
                    for i in 0..dim {
                        let mut acc = y[i];
                        for j in 0..s {
                            acc += hs * DP_A[s][j] * k[j][i];
                        }
                        tmp[i] = acc;
                    }
                    f(&tmp, &mut k[s]);
                }
                let mut err: f64 = 0.0;
                for i in 0..dim {
                    let mut yi = y[i];
                    let mut ei = 0.0;
                    for j in 0..7 {
                        yi += hs * DP_B[j] * k[j][i];
                        ei += hs * DP_E[j] * k[j][i];
                    }
                    ynew[i] = yi;
                    let sc = opts.atol + opts.rtol * y[i].abs().max(yi.abs());
                    err = err.max((ei / sc).abs());
                }
                if !err.is_finite() {
                    hs *= 0.1;
                    if hs.abs() < 1e-300 {
                        return Err(KmError::Numeric("ode step underflow".into()));
                    }
                    continue;
                }
                if err <= 1.0 {
                    t += hs;
                    y.copy_from_slice(&ynew);
                    // FSAL: last stage is f(ynew)
                    let last = k[6].clone();
                    k[0].copy_from_slice(&last);
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = hs.abs() * fac;
                    break;
                }
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                hs *= fac;
                if hs.abs() < 1e-14 * (1.0 + t.abs()) {
                    return Err(KmError::Numeric("ode step size underflow".into()));
                }
            }
        }
        t = target;
        out.push(y.clone());
    }
    Ok(out)
}

/// Fourth-order central-difference Jacobian.
pub fn fd_jacobian<F>(map: F, point: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = point.len();
    let f0 = map(point);
    let mut jac = DMatrix::zeros(f0.len(), n);
    for j in 0..n {
        let eval = |s: f64| {
            let mut p = point.clone();
            p[j] += s * step;
            map(&p)
        };
        let fp1 = eval(1.0);
        let fm1 = eval(-1.0);
        let fp2 = eval(2.0);
        let fm2 = eval(-2.0);
        let col = (fm2 - fp2 + (fp1 - fm1) * 8.0) / (12.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_solver_matches_dense() {
        let n = 9;
        let (kl, ku) = (2, 3);
        let mut band = BandMatrix::new(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                if c <= r + ku && r <= c + kl {
                    let v = ((r * 7 + c * 3) % 11) as f64 - 5.0 + if r == c { 0.0 } else { 0.5 };
                    band.add(r, c, v);
                    dense[(r, c)] = v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut x = b.clone();
        band.factor().unwrap();
        band.solve(&mut x);
        let xd = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn dopri_exponential() {
        let out = dopri5(|y, dy| dy[0] = -y[0], 0.0, &[1.0], &[1.0, 2.0], OdeOptions::default()).unwrap();
        assert!((out[0][0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((out[1][0] - (-2.0f64).exp()).abs() < 1e-9);
        let back = dopri5(|y, dy| dy[0] = -y[0], 0.0, &[1.0], &[-1.0], OdeOptions::default()).unwrap();
        assert!((back[0][0] - 1.0f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn sign_of_diagonalizable() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, -1.0, 3.0, 0.0, 0.0, 0.5]);
        let s = matrix_sign(&m).unwrap();
        let s2 = &s * &s;
        assert!((s2 - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!((s.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_and_complement() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 1);
        assert!((&m * &ns).norm() < 1e-12);
        let comp = orth_complement(&ns);
        assert_eq!(comp.ncols(), 2);
        assert!((ns.transpose() * comp).norm() < 1e-12);
    }

    #[test]
    fn fd_jacobian_linear() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let j = fd_jacobian(|x| &a * x, &DVector::from_vec(vec![0.3, -0.2]), 1e-3);
        assert!((j - a).norm() < 1e-10);
    }
}
