//! Small dense linear algebra on row-major `f64` slices.
//!
//! Moment dimensions in this crate are tiny (usually 1 or 2), so a
//! straightforward Cholesky factorization is all that is needed.

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Input(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self { dim: 1, data: vec![v] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
            })
        })
    }

    /// `x` ↦ `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.data, self.dim, x)
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.data, self.dim)
            .ok_or_else(|| Error::Rank("Cholesky factorization failed".into()))
    }
}

pub(crate) fn mat_vec(a: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|i| a[i * dim..(i + 1) * dim].iter().zip(x).map(|(a, x)| a * x).sum())
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive or not finite.
    pub fn factor(a: &[f64], dim: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), dim * dim);
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut d = a[j * dim + j];
            for k in 0..j {
                d -= l[j * dim + k] * l[j * dim + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * dim + j] = djj;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / djj;
            }
        }
        Some(Self { dim, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smallest diagonal entry of `L`; its square bounds the conditioning.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim).map(|i| self.l[i * self.dim + i]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        (0..self.dim).map(|i| self.l[i * self.dim + i]).fold(0.0, f64::max)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves `L z = b` only; `|z|²` is the Mahalanobis form `bᵀA⁻¹b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// `L z` for a vector `z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * z[k]).sum())
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.l[i * self.dim + i].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        Matrix { dim: n, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_2x2() {
        let a = Matrix::new(2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let c = a.cholesky().unwrap();
        let x = c.solve(&[2.0, 1.0]);
        let back = a.mul_vec(&x);
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
        assert!((c.log_det() - 8f64.ln()).abs() < 1e-14);
        let inv = c.inverse();
        assert!((inv.get(0, 0) - 3.0 / 8.0).abs() < 1e-14);
        assert!((inv.get(0, 1) + 2.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = Matrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(a.cholesky().is_err());
        assert!(Matrix::new(2, vec![1.0]).is_err());
    }
}
