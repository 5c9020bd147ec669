//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Largest condition number accepted before a symmetric system is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Spectral condition number of a symmetric matrix, `+inf` if it is not
/// positive definite.
pub fn spd_condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factorization guarded by a condition-number check.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "symmetric matrix",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let condition = spd_condition_number(a);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let chol = Cholesky::new(a.clone()).ok_or(Error::Singular { condition })?;
        Ok(Self { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `x^T A^{-1} x` for symmetric positive definite `A`.
pub fn inverse_quadratic_form(a: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let solver = SpdSolver::new(a)?;
    Ok(x.dot(&solver.solve_vec(x)))
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
