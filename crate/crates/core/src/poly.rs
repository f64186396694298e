//! Dense truncated multivariate polynomials in graded-lexicographic order.

use std::collections::HashMap;

/// Monomials of total degree 0..=max_degree in `vars` variables.
///
/// Within a degree the order is lexicographic with larger leading
/// exponents first, so `x0^d` leads each degree block.
#[derive(Debug, Clone)]
pub struct MonomialTable {
    pub vars: usize,
    pub max_degree: usize,
    exps: Vec<Vec<u8>>,
    degree_start: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    product: Vec<Option<u32>>,
}

fn push_degree(vars: usize, d: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() + 1 == vars {
        prefix.push(d as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=d).rev() {
        prefix.push(e as u8);
        push_degree(vars, d - e, prefix, out);
        prefix.pop();
    }
}

impl MonomialTable {
    pub fn new(vars: usize, max_degree: usize) -> Self {
        let mut exps = Vec::new();
        let mut degree_start = Vec::new();
        for d in 0..=max_degree {
            degree_start.push(exps.len());
            if vars == 0 {
                if d == 0 {
                    exps.push(vec![]);
                }
                continue;
            }
            push_degree(vars, d, &mut Vec::new(), &mut exps);
        }
        degree_start.push(exps.len());
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let len = exps.len();
        let mut product = vec![None; len * len];
        for i in 0..len {
            for j in 0..len {
                let e: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                product[i * len + j] = index.get(&e).map(|&k| k as u32);
            }
        }
        MonomialTable { vars, max_degree, exps, degree_start, index, product }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponent(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&e| e as usize).sum()
    }

    /// Index range of the monomials of degree `d`.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }

    pub fn index_of(&self, exp: &[u8]) -> Option<usize> {
        self.index.get(exp).copied()
    }

    /// Index of the linear monomial x_k.
    pub fn linear(&self, k: usize) -> usize {
        let mut e = vec![0u8; self.vars];
        e[k] = 1;
        self.index[&e]
    }

    pub fn zero(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    /// Product truncated at `max_degree`, accumulated into `out` with a factor.
    pub fn mul_add(&self, a: &[f64], b: &[f64], factor: f64, out: &mut [f64]) {
        let len = self.len();
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let fa = factor * ai;
            let row = &self.product[i * len..(i + 1) * len];
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                if let Some(k) = row[j] {
                    out[k as usize] += fa * bj;
                }
            }
        }
    }

    pub fn derivative(&self, a: &[f64], var: usize) -> Vec<f64> {
        let mut out = self.zero();
        for (i, &c) in a.iter().enumerate() {
            let e = self.exps[i][var];
            if c == 0.0 || e == 0 {
                continue;
            }
            let mut lower = self.exps[i].clone();
            lower[var] -= 1;
            out[self.index[&lower]] += c * e as f64;
        }
        out
    }

    pub fn eval(&self, a: &[f64], x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, &c) in a.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut t = c;
            for (k, &e) in self.exps[i].iter().enumerate() {
                t *= x[k].powi(e as i32);
            }
            s += t;
        }
        s
    }

    /// Keeps only the degree-`d` part.
    pub fn degree_part(&self, a: &[f64], d: usize) -> Vec<f64> {
        let mut out = self.zero();
        for i in self.degree_range(d) {
            out[i] = a[i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_order() {
        let t = MonomialTable::new(3, 4);
        assert_eq!(t.len(), 35);
        assert_eq!(t.exponent(t.degree_range(2).start), &[2, 0, 0]);
        assert_eq!(t.exponent(t.degree_range(2).end - 1), &[0, 0, 2]);
    }

    #[test]
    fn product_and_derivative() {
        let t = MonomialTable::new(2, 4);
        // (1 + x)(x - y)
        let mut a = t.zero();
        a[0] = 1.0;
        a[t.linear(0)] = 1.0;
        let mut b = t.zero();
        b[t.linear(0)] = 1.0;
        b[t.linear(1)] = -1.0;
        let mut p = t.zero();
        t.mul_add(&a, &b, 1.0, &mut p);
        let x = [0.3, -0.7];
        assert!((t.eval(&p, &x) - (1.3) * (1.0)).abs() < 1e-14);
        let dp = t.derivative(&p, 0);
        // d/dx (x - y + x^2 - x y) = 1 + 2x - y
        assert!((t.eval(&dp, &x) - (1.0 + 0.6 + 0.7)).abs() < 1e-14);
    }
}
