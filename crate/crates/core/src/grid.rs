//! Uniformly sampled vector-valued functions on a symmetric interval.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{KmError, Result};

const MAGIC: &[u8; 4] = b"KMGF";
const VERSION: u32 = 1;

/// Samples of a function [-L, L] -> R^n on an odd number of uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    half_width: f64,
    nodes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(half_width: f64, nodes: usize, dim: usize) -> Result<Self> {
        check_layout(half_width, nodes)?;
        Ok(GridFunction { half_width, nodes, dim, values: vec![0.0; nodes * dim] })
    }

    /// Row-major values, `nodes * dim` entries.
    pub fn from_values(half_width: f64, nodes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_layout(half_width, nodes)?;
        if values.len() != nodes * dim {
            return Err(KmError::Dimension(format!(
                "expected {} values, got {}",
                nodes * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KmError::Numeric("grid values must be finite".into()));
        }
        Ok(GridFunction { half_width, nodes, dim, values })
    }

    pub fn from_fn<F>(half_width: f64, nodes: usize, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let mut g = Self::zeros(half_width, nodes, dim)?;
        for i in 0..nodes {
            let v = f(g.x(i));
            if v.len() != dim {
                return Err(KmError::Dimension("sample length differs from dim".into()));
            }
            g.row_mut(i).copy_from_slice(v.as_slice());
        }
        Ok(g)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    /// Index of the node x = 0.
    pub fn center(&self) -> usize {
        (self.nodes - 1) / 2
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.x(i)).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.nodes == other.nodes && self.half_width == other.half_width
    }

    /// Component `k` as a scalar grid function.
    pub fn component(&self, k: usize) -> GridFunction {
        let vals = (0..self.nodes).map(|i| self.row(i)[k]).collect();
        GridFunction { half_width: self.half_width, nodes: self.nodes, dim: 1, values: vals }
    }

    /// Applies a fixed matrix to every sample.
    pub fn map_linear(&self, m: &DMatrix<f64>) -> GridFunction {
        let out_dim = m.nrows();
        let mut vals = vec![0.0; self.nodes * out_dim];
        for i in 0..self.nodes {
            let row = self.row(i);
            for r in 0..out_dim {
                let mut acc = 0.0;
                for c in 0..self.dim {
                    acc += m[(r, c)] * row[c];
                }
                vals[i * out_dim + r] = acc;
            }
        }
        GridFunction { half_width: self.half_width, nodes: self.nodes, dim: out_dim, values: vals }
    }

    /// Applies an arbitrary map to every sample.
    pub fn map_nodes<F>(&self, out_dim: usize, f: F) -> GridFunction
    where
        F: Fn(f64, &[f64]) -> DVector<f64>,
    {
        let mut vals = Vec::with_capacity(self.nodes * out_dim);
        for i in 0..self.nodes {
            let v = f(self.x(i), self.row(i));
            vals.extend_from_slice(v.as_slice());
        }
        GridFunction { half_width: self.half_width, nodes: self.nodes, dim: out_dim, values: vals }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        assert!(self.same_grid(other) && self.dim == other.dim);
        let vals = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        GridFunction { values: vals, ..self.clone() }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert!(self.same_grid(other) && self.dim == other.dim);
        let vals = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridFunction { values: vals, ..self.clone() }
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// Largest Euclidean norm of a sample.
    pub fn sup_norm(&self) -> f64 {
        (0..self.nodes)
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest sample norm over nodes with |x| <= `fraction * L`.
    pub fn sup_norm_interior(&self, fraction: f64) -> f64 {
        (0..self.nodes)
            .filter(|&i| self.x(i).abs() <= fraction * self.half_width + 1e-12)
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// CSV with header `x, w_1, ..., w_n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x");
        for k in 1..=self.dim {
            s.push_str(&format!(", w_{k}"));
        }
        s.push('\n');
        for i in 0..self.nodes {
            s.push_str(&format_float(self.x(i)));
            for v in self.row(i) {
                s.push_str(", ");
                s.push_str(&format_float(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| KmError::Schema("empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
        if cols.first() != Some(&"x") {
            return Err(KmError::Schema("csv header must start with x".into()));
        }
        let dim = cols.len() - 1;
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| KmError::Schema(format!("bad number: {e}")))?;
            if fields.len() != dim + 1 {
                return Err(KmError::Schema("ragged csv row".into()));
            }
            xs.push(fields[0]);
            vals.extend_from_slice(&fields[1..]);
        }
        let m = xs.len();
        if m < 5 {
            return Err(KmError::Schema("too few rows".into()));
        }
        Self::from_values(-xs[0], m, dim, vals)
    }

    /// Binary cache: magic, version, L, m, n, row-major values (little endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.half_width.to_le_bytes());
        out.extend_from_slice(&(self.nodes as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[0..4] != MAGIC {
            return Err(KmError::Schema("not a KMGF cache".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(KmError::Schema(format!("unsupported cache version {version}")));
        }
        let half_width = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let nodes = u32_at(16) as usize;
        let dim = u32_at(20) as usize;
        let need = 24 + 8 * nodes * dim;
        if bytes.len() != need {
            return Err(KmError::Schema(format!("cache length {} != {need}", bytes.len())));
        }
        let values = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_values(half_width, nodes, dim, values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn check_layout(half_width: f64, nodes: usize) -> Result<()> {
    if nodes < 5 || nodes.is_multiple_of(2) {
        return Err(KmError::Config(format!("node count must be odd and >= 5, got {nodes}")));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(KmError::Config(format!("half width must be positive, got {half_width}")));
    }
    Ok(())
}

/// Shortest decimal that round-trips, used by every text emitter.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_rules() {
        assert!(GridFunction::zeros(1.0, 4, 1).is_err());
        assert!(GridFunction::zeros(1.0, 3, 1).is_err());
        let g = GridFunction::zeros(2.0, 5, 2).unwrap();
        assert_eq!(g.center(), 2);
        assert_eq!(g.x(2), 0.0);
        assert_eq!(g.step(), 1.0);
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let g = GridFunction::from_fn(3.0, 7, 2, |x| DVector::from_vec(vec![x.sin(), 0.1 * x])).unwrap();
        let back = GridFunction::from_csv(&g.to_csv()).unwrap();
        assert_eq!(back, g);
        let bin = GridFunction::from_bytes(&g.to_bytes()).unwrap();
        assert_eq!(bin, g);
        assert!(g.to_csv().starts_with("x, w_1, w_2\n"));
    }
}
