//! Small dense helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{EmmbError, Result};

/// Relative singular-value floor below which a Gram matrix is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// A symmetric positive definite matrix that passed the scale-free rank test.
#[derive(Debug, Clone)]
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub(crate) fn new(matrix: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let (smallest, largest) = singular_range(matrix);
        if !(largest > 0.0) || !(smallest >= SINGULAR_RTOL * largest) {
            return Err(EmmbError::Singular {
                context,
                smallest,
                largest,
            });
        }
        let chol = matrix.clone().cholesky().ok_or(EmmbError::Singular {
            context,
            smallest,
            largest,
        })?;
        Ok(Self { chol })
    }

    pub(crate) fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Smallest and largest singular values of a symmetric matrix.
pub(crate) fn singular_range(matrix: &DMatrix<f64>) -> (f64, f64) {
    if matrix.iter().any(|v| !v.is_finite()) {
        return (f64::NAN, f64::NAN);
    }
    let eig = matrix.clone().symmetric_eigenvalues();
    eig.iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
