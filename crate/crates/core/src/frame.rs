//! Boundary-adapted orthonormal frames.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Orthonormal frame at a boundary point whose last column is the unit
/// outward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame {
    origin: Vec<f64>,
    q: DMatrix<f64>,
}

impl AdaptedFrame {
    /// Householder frame carrying `e_n` to the normalized `normal`.
    ///
    /// With `u` the unit normal: for `u_n ≥ 0` reflect along `u + e_n` and
    /// negate the last column; otherwise reflect along `u − e_n`.
    pub fn from_normal(origin: Vec<f64>, normal: &[f64]) -> Result<AdaptedFrame> {
        let n = normal.len();
        let len = norm(normal);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::ZeroGradient(origin));
        }
        let u: Vec<f64> = normal.iter().map(|v| v / len).collect();
        let flip = u[n - 1] >= 0.0;
        let mut w = u.clone();
        w[n - 1] += if flip { 1.0 } else { -1.0 };
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let mut q = DMatrix::from_fn(n, n, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            id - 2.0 * w[r] * w[c] / ww
        });
        if flip {
            for r in 0..n {
                q[(r, n - 1)] = -q[(r, n - 1)];
            }
        }
        // the reflection is exact in exact arithmetic; pin the normal column
        for r in 0..n {
            q[(r, n - 1)] = u[r];
        }
        Ok(AdaptedFrame { origin, q })
    }

    /// Frame from an explicit orthogonal matrix.
    pub fn from_matrix(origin: Vec<f64>, q: DMatrix<f64>) -> AdaptedFrame {
        AdaptedFrame { origin, q }
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Column `j` of the frame.
    pub fn axis(&self, j: usize) -> Vec<f64> {
        self.q.column(j).iter().copied().collect()
    }

    pub fn normal(&self) -> Vec<f64> {
        self.axis(self.dim() - 1)
    }

    /// `‖QᵀQ − Id‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        (self.q.transpose() * &self.q - DMatrix::<f64>::identity(n, n)).amax()
    }
}
