//! Levenberg–Marquardt for small nonlinear least-squares problems.

use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// A residual vector `r(θ)` with Jacobian `∂r/∂θ`.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Fills residuals and, when given, the Jacobian. An `Err` marks `params`
    /// as infeasible; the solver treats it as a rejected step.
    fn evaluate(&self, params: &[f64], residuals: &mut [f64], jacobian: Option<&mut DMatrix<f64>>) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative step-size tolerance.
    pub xtol: f64,
    /// Relative cost-reduction tolerance.
    pub ftol: f64,
    /// Tolerance on the scaled gradient `‖Jᵀr‖∞ / (1 + ‖r‖²)`.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-13,
            ftol: 1e-15,
            gtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Residual sum of squares at `params`.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    init: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let k = problem.n_params();
    let m = problem.n_residuals();
    if init.len() != k {
        return Err(Error::DimensionMismatch {
            what: "initial parameters",
            expected: k,
            got: init.len(),
        });
    }
    let mut x = init.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, k);
    problem
        .evaluate(&x, &mut r, Some(&mut jac))
        .map_err(|e| e.context("initial point is infeasible"))?;
    let mut rss = sum_sq(&r);

    let mut trial = vec![0.0; m];
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&rv);
        let gmax = grad.amax();
        if gmax <= opts.gtol * (1.0 + rss) {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..k).map(|i| jtj[(i, i)].max(1e-12)).collect();
        if mu < 0.0 {
            mu = 1e-3 * diag.iter().cloned().fold(0.0, f64::max);
        }

        let mut accepted = false;
        while !accepted {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += mu * diag[i];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e30 {
                        break;
                    }
                    continue;
                }
            };
            let x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let feasible = problem.evaluate(&x_new, &mut trial, None).is_ok();
            let new_rss = if feasible { sum_sq(&trial) } else { f64::INFINITY };
            // predicted reduction of ½‖r‖²·2 under the damped model
            let predicted = -(2.0 * step.dot(&grad) + step.dot(&(&jtj * &step)));
            let rho = (rss - new_rss) / predicted.max(f64::MIN_POSITIVE);
            if feasible && new_rss.is_finite() && rho > 0.0 {
                let xnorm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
                let snorm = step.norm();
                let reduction = (rss - new_rss) / rss.max(f64::MIN_POSITIVE);
                x = x_new;
                problem.evaluate(&x, &mut r, Some(&mut jac))?;
                rss = sum_sq(&r);
                mu *= f64::max(1.0 / 3.0, 1.0 - libm::pow(2.0 * rho - 1.0, 3.0));
                nu = 2.0;
                accepted = true;
                if snorm <= opts.xtol * (xnorm + opts.xtol) || reduction <= opts.ftol {
                    converged = true;
                }
            } else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    break;
                }
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // no step reduces the cost: stationary to working precision
            converged = true;
            break;
        }
    }

    Ok(LmOutcome {
        params: x,
        rss,
        iterations,
        converged,
    })
}
