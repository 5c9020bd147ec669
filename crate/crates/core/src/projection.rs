//! Weighted least-squares fits of the DIM and PIM mean functions.
//!
//! The same problem appears twice: maximum likelihood on a sample (unit
//! weights, observed responses) and the Kullback–Leibler projection of one
//! normal model onto another (support probabilities as weights, the true
//! mean as target). For normal errors both reduce to least squares in the
//! mean parameters with σ² profiled out.

use crate::models::{pair_count, write_pim_gradient, DimParams, ModelParams};
use crate::optim::{levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Rows of covariates with a target and an optional weight per row.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    /// Row-major `n × p` covariates.
    pub x: &'a [f64],
    pub p: usize,
    pub target: &'a [f64],
    pub weight: Option<&'a [f64]>,
}

impl<'a> WeightedSample<'a> {
    pub fn new(x: &'a [f64], p: usize, target: &'a [f64], weight: Option<&'a [f64]>) -> Result<Self> {
        if p == 0 || x.len() != p * target.len() {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: p * target.len(),
                got: x.len(),
            });
        }
        if let Some(w) = weight {
            if w.len() != target.len() {
                return Err(Error::DimensionMismatch {
                    what: "weights",
                    expected: target.len(),
                    got: w.len(),
                });
            }
        }
        Ok(Self { x, p, target, weight })
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn sqrt_weight(&self, i: usize) -> f64 {
        self.weight.map_or(1.0, |w| libm::sqrt(w[i]))
    }
}

/// Mean parameters in flat order (without σ²) and the weighted RSS.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFit {
    pub mean_params: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn linear_least_squares(sample: &WeightedSample<'_>, k: usize, row: impl Fn(&[f64], &mut [f64])) -> Result<MeanFit> {
    let n = sample.n();
    if n < k {
        return Err(Error::RankDeficient);
    }
    let mut design = DMatrix::zeros(n, k);
    let mut rhs = DVector::zeros(n);
    let mut buf = vec![0.0; k];
    for i in 0..n {
        row(sample.row(i), &mut buf);
        let sw = sample.sqrt_weight(i);
        for (j, v) in buf.iter().enumerate() {
            design[(i, j)] = sw * v;
        }
        rhs[i] = sw * sample.target[i];
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let rmax = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..k).any(|j| !(r[(j, j)].abs() > 1e-10 * rmax)) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().tr_mul(&rhs);
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient)?;
    let resid = &rhs - &design * &coef;
    Ok(MeanFit {
        mean_params: coef.iter().copied().collect(),
        rss: resid.norm_squared(),
        iterations: 0,
        converged: true,
    })
}

/// Ordinary (weighted) least squares on `(1, x)`.
pub fn additive_least_squares(sample: &WeightedSample<'_>) -> Result<MeanFit> {
    linear_least_squares(sample, 1 + sample.p, |x, out| {
        out[0] = 1.0;
        out[1..].copy_from_slice(x);
    })
}

/// Weighted least squares on the pairwise-expanded design.
pub fn pim_least_squares(sample: &WeightedSample<'_>) -> Result<MeanFit> {
    linear_least_squares(sample, 1 + sample.p + pair_count(sample.p), write_pim_gradient)
}

struct DimProblem<'a> {
    sample: WeightedSample<'a>,
}

impl DimProblem<'_> {
    // z = (β₀, log β₁…log β_p, log λ)
    fn params(&self, z: &[f64]) -> Result<DimParams> {
        let p = self.sample.p;
        let beta: Vec<f64> = z[1..=p].iter().map(|v| libm::exp(*v)).collect();
        let lambda = libm::exp(z[p + 1]);
        if !z[0].is_finite() || beta.iter().any(|b| !b.is_finite()) || !lambda.is_finite() {
            return Err(Error::Domain("DIM parameters overflowed".into()));
        }
        DimParams::new(z[0], beta, lambda, 1.0)
    }
}

impl LeastSquaresProblem for DimProblem<'_> {
    fn n_params(&self) -> usize {
        self.sample.p + 2
    }

    fn n_residuals(&self) -> usize {
        self.sample.n()
    }

    fn evaluate(&self, z: &[f64], residuals: &mut [f64], jacobian: Option<&mut DMatrix<f64>>) -> Result<()> {
        let p = self.sample.p;
        let model = ModelParams::Dim(self.params(z)?);
        let mut g = vec![0.0; p + 2];
        let chain: Vec<f64> = match &model {
            ModelParams::Dim(d) => core::iter::once(1.0)
                .chain(d.beta.iter().copied())
                .chain(core::iter::once(d.lambda))
                .collect(),
            _ => unreachable!(),
        };
        let mut jac = jacobian;
        for i in 0..self.sample.n() {
            let x = self.sample.row(i);
            let sw = self.sample.sqrt_weight(i);
            let mu = model.mean(x)?;
            residuals[i] = sw * (self.sample.target[i] - mu);
            if !residuals[i].is_finite() {
                return Err(Error::Domain("non-finite DIM residual".into()));
            }
            if let Some(j) = jac.as_deref_mut() {
                model.mean_gradient_into(x, &mut g)?;
                for c in 0..p + 2 {
                    j[(i, c)] = -sw * g[c] * chain[c];
                }
            }
        }
        Ok(())
    }
}

/// Nonlinear (weighted) least squares for the DIM mean, positivity of β and λ
/// enforced through a log reparameterization.
///
/// `init` holds natural mean parameters `(β₀, β, λ)`; by default the additive
/// least-squares fit with β clipped to at least `1e-6` and λ = 1.
pub fn dim_least_squares(sample: &WeightedSample<'_>, init: Option<&[f64]>, opts: &LmOptions) -> Result<MeanFit> {
    let p = sample.p;
    if let Some(v) = sample.x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("DIM fitting needs nonnegative covariates, got {v}")));
    }
    let start: Vec<f64> = match init {
        Some(v) => {
            if v.len() != p + 2 {
                return Err(Error::DimensionMismatch {
                    what: "DIM initial values",
                    expected: p + 2,
                    got: v.len(),
                });
            }
            v.to_vec()
        }
        None => {
            let mut v = additive_least_squares(sample)?.mean_params;
            for b in v[1..].iter_mut() {
                *b = b.max(1e-6);
            }
            v.push(1.0);
            v
        }
    };
    if start[1..].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("init", "DIM main effects and lambda must be > 0"));
    }
    let z0: Vec<f64> = core::iter::once(start[0])
        .chain(start[1..].iter().map(|v| libm::log(*v)))
        .collect();
    let problem = DimProblem { sample: *sample };
    let out = levenberg_marquardt(&problem, &z0, opts)?;
    let natural: Vec<f64> = core::iter::once(out.params[0])
        .chain(out.params[1..].iter().map(|v| libm::exp(*v)))
        .collect();
    Ok(MeanFit {
        mean_params: natural,
        rss: out.rss,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(p: usize) -> Vec<f64> {
        (0..1usize << p)
            .flat_map(|b| (0..p).map(move |i| ((b >> i) & 1) as f64))
            .collect()
    }

    #[test]
    fn pim_interpolates_exact_targets() {
        let p = 3;
        let x = cube(p);
        let truth = [0.2, 0.5, -0.4, 1.0, 0.3, -0.7, 0.9];
        let mut row = vec![0.0; 7];
        let y: Vec<f64> = (0..8)
            .map(|i| {
                write_pim_gradient(&x[i * p..(i + 1) * p], &mut row);
                row.iter().zip(&truth).map(|(a, b)| a * b).sum()
            })
            .collect();
        let s = WeightedSample::new(&x, p, &y, None).unwrap();
        let fit = pim_least_squares(&s).unwrap();
        for (a, b) in fit.mean_params.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pim_detects_rank_deficiency() {
        // x₁ = x₂ in every row makes the design singular
        let x = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [0.0, 1.0, 0.1, 0.9, 1.1];
        let s = WeightedSample::new(&x, 2, &y, None).unwrap();
        assert!(matches!(pim_least_squares(&s), Err(Error::RankDeficient)));
    }

    #[test]
    fn dim_recovers_exact_targets_with_weights() {
        let p = 3;
        let x = cube(p);
        let truth = DimParams::new(0.3, vec![0.5, 0.8, 0.4], 1.7, 1.0).unwrap();
        let model = ModelParams::Dim(truth.clone());
        let y: Vec<f64> = (0..8).map(|i| model.mean(&x[i * p..(i + 1) * p]).unwrap()).collect();
        let w = [0.05, 0.1, 0.2, 0.15, 0.1, 0.1, 0.2, 0.1];
        let s = WeightedSample::new(&x, p, &y, Some(&w)).unwrap();
        let fit = dim_least_squares(&s, None, &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.mean_params[4] - 1.7).abs() < 1e-9, "{:?}", fit.mean_params);
        assert!((fit.mean_params[2] - 0.8).abs() < 1e-9);
    }
}
