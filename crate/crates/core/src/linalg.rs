//! Small dense matrices for problem coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidParameter {
                name: "matrix",
                reason: "rows must be non-empty and of equal length".into(),
            });
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = (0..self.cols).map(|j| self.get(i, j) * v[j]).sum();
        }
    }

    /// `self^T * v`
    pub fn t_mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.cols) {
            *o = (0..self.rows).map(|i| self.get(i, j) * v[i]).sum();
        }
    }

    /// `x^T self x` for a square matrix.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                total += x[i] * self.get(i, j) * x[j];
            }
        }
        total
    }

    /// `self * self^T`
    pub fn gram(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for k in 0..self.rows {
                out.data[i * self.rows + k] = (0..self.cols)
                    .map(|j| self.get(i, j) * self.get(k, j))
                    .sum();
            }
        }
        out
    }
}

/// Smallest eigenvalue of a symmetric `n x n` matrix (row-major). Closed
/// form for `n <= 2`, cyclic Jacobi rotations otherwise.
pub fn min_eigenvalue_sym(m: &[f64], n: usize) -> f64 {
    match n {
        1 => m[0],
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + c);
            let half = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean - half
        }
        _ => {
            let mut a = m.to_vec();
            for _ in 0..100 {
                let off: f64 = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| a[i * n + j] * a[i * n + j])
                    .sum();
                if off < 1e-30 {
                    break;
                }
                for p in 0..n {
                    for q in p + 1..n {
                        let apq = a[p * n + q];
                        if apq == 0.0 {
                            continue;
                        }
                        let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let t = if theta == 0.0 { 1.0 } else { t };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let (akp, akq) = (a[k * n + p], a[k * n + q]);
                            a[k * n + p] = c * akp - s * akq;
                            a[k * n + q] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                            a[p * n + k] = c * apk - s * aqk;
                            a[q * n + k] = s * apk + c * aqk;
                        }
                    }
                }
            }
            (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
        }
    }
}
