//! Finite-sample check of the asymptotics: simulate under the local
//! alternative, fit DIM or PIM by maximum likelihood, and count Wald
//! rejections.
//!
//! Replicate `k` draws from its own ChaCha stream (`set_stream(k)`) under the
//! master seed, so results do not depend on the order replicates run in.

use crate::asymptotics::{chisq_quantile, ConstraintSpec};
use crate::expectation::{fisher_information_at, CovariateDistribution};
use crate::linalg::SpdSolver;
use crate::models::{DimParams, Family, ModelParams, NullParams, ParamIndexMap, PimParams};
use crate::optim::LmOptions;
use crate::projection::{dim_least_squares, pim_least_squares, WeightedSample};
use crate::scenarios::{build_constraint, PowerScenario};
use crate::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Gradient-norm threshold for declaring a fit converged.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Simulated covariates and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    /// Row-major `n × p`.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if p == 0 || x.len() != p * y.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset rows",
                expected: p * y.len(),
                got: x.len(),
            });
        }
        Ok(Self { p, x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Collapses repeated covariate rows. Least squares on the group means
    /// weighted by counts has the same minimizer as on the raw rows, and the
    /// RSS differs by the within-group sum of squares.
    pub fn grouped(&self) -> GroupedData {
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut g = GroupedData {
            p: self.p,
            x: Vec::new(),
            count: Vec::new(),
            mean: Vec::new(),
            within_ss: 0.0,
        };
        let mut m2 = Vec::new();
        for i in 0..self.n() {
            let row = self.row(i);
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let j = *index.entry(key).or_insert_with(|| {
                g.x.extend_from_slice(row);
                g.count.push(0.0);
                g.mean.push(0.0);
                m2.push(0.0);
                g.count.len() - 1
            });
            // Welford update
            g.count[j] += 1.0;
            let d = self.y[i] - g.mean[j];
            g.mean[j] += d / g.count[j];
            m2[j] += d * (self.y[i] - g.mean[j]);
        }
        g.within_ss = m2.iter().sum();
        g
    }
}

/// Distinct covariate rows with their counts and response means.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData {
    pub p: usize,
    pub x: Vec<f64>,
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    pub within_ss: f64,
}

impl GroupedData {
    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.p..(j + 1) * self.p]
    }

    fn sample(&self) -> Result<WeightedSample<'_>> {
        WeightedSample::new(&self.x, self.p, &self.mean, Some(&self.count))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub p: usize,
    pub n: usize,
    /// Flat parameters in [`ParamIndexMap`] order.
    pub estimates: Vec<f64>,
    pub converged: bool,
    pub loglik: f64,
    pub iterations: usize,
    /// Euclidean norm of the gradient of the average log-likelihood.
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::from_flat(self.family, self.p, &self.estimates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500 }
    }
}

/// The data-generating parameters `ω₀ + n^{-1/2} Δ η` of the true family.
pub fn local_alternative(truth: Family, null: &NullParams, eta: &[f64], delta: f64, n: usize) -> Result<ModelParams> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    let map = ParamIndexMap::new(truth, null.p());
    if eta.len() != map.interaction_dim() {
        return Err(Error::DimensionMismatch {
            what: "interaction direction",
            expected: map.interaction_dim(),
            got: eta.len(),
        });
    }
    let step = delta / libm::sqrt(n as f64);
    match truth {
        Family::Additive => Ok(ModelParams::Additive(null.clone())),
        Family::Dim => {
            let lambda = 1.0 + step * eta[0];
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!(
                    "local alternative has lambda = {lambda} <= 0; Delta is too negative for n = {n}"
                )));
            }
            Ok(ModelParams::Dim(DimParams::new(null.beta0(), null.beta().to_vec(), lambda, null.sigma2())?))
        }
        Family::Pim => {
            let gamma = eta.iter().map(|e| step * e).collect();
            Ok(ModelParams::Pim(PimParams::new(null.beta0(), null.beta().to_vec(), gamma, null.sigma2())?))
        }
    }
}

/// `n` iid draws of `(X, Y)` with `Y = μ(X) + σ Z`, from an explicit RNG.
pub fn generate_data_with<R: Rng + ?Sized>(
    truth: &ModelParams,
    dist: &CovariateDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let p = truth.p();
    if dist.dim() != p {
        return Err(Error::DimensionMismatch {
            what: "covariate distribution",
            expected: p,
            got: dist.dim(),
        });
    }
    let sigma = libm::sqrt(truth.sigma2());
    let mut x = vec![0.0; n * p];
    let mut y = Vec::with_capacity(n);
    for row in x.chunks_exact_mut(p) {
        dist.sample_into(rng, row);
        let z: f64 = rng.sample(StandardNormal);
        y.push(truth.mean(row)? + sigma * z);
    }
    Dataset::new(p, x, y)
}

/// Deterministic in `seed`.
pub fn generate_data(truth: &ModelParams, dist: &CovariateDistribution, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    generate_data_with(truth, dist, n, &mut rng)
}

fn finish_fit(
    data: &GroupedData,
    family: Family,
    mean_params: Vec<f64>,
    rss: f64,
    iterations: usize,
    solver_converged: bool,
) -> Result<FitResult> {
    let n = data.count.iter().sum::<f64>() as usize;
    let sigma2 = (rss + data.within_ss) / n as f64;
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate("residual variance estimate is zero".into()));
    }
    let mut estimates = mean_params;
    estimates.push(sigma2);
    let params = ModelParams::from_flat(family, data.p, &estimates)?;
    let k = params.index_map().mean_dim();
    let mut g = vec![0.0; k];
    let mut score = vec![0.0; k];
    for j in 0..data.len() {
        let x = data.row(j);
        let r = data.count[j] * (data.mean[j] - params.mean(x)?);
        params.mean_gradient_into(x, &mut g)?;
        for (s, gi) in score.iter_mut().zip(&g) {
            *s += r * gi;
        }
    }
    // The σ² component vanishes at σ² = RSS/n.
    let gradient_norm = libm::sqrt(score.iter().map(|s| s * s).sum::<f64>()) / (n as f64 * sigma2);
    let loglik = -0.5 * n as f64 * (libm::log(2.0 * PI * sigma2) + 1.0);
    Ok(FitResult {
        family,
        p: data.p,
        n,
        estimates,
        converged: solver_converged && gradient_norm < GRADIENT_TOLERANCE,
        loglik,
        iterations,
        gradient_norm,
    })
}

/// Maximum-likelihood PIM fit: least squares on the pairwise-expanded design,
/// σ̂² = RSS/n.
pub fn fit_pim(data: &Dataset) -> Result<FitResult> {
    let k = ParamIndexMap::new(Family::Pim, data.p()).mean_dim();
    if data.n() <= k {
        return Err(Error::Degenerate(format!(
            "n = {} leaves no residual degrees of freedom for {k} mean parameters",
            data.n()
        )));
    }
    let groups = data.grouped();
    let fit = pim_least_squares(&groups.sample()?)?;
    finish_fit(&groups, Family::Pim, fit.mean_params, fit.rss, 0, true)
}

/// Maximum-likelihood DIM fit. `init` is a flat DIM parameter vector (σ² is
/// ignored); see [`dim_least_squares`] for the default start.
pub fn fit_dim(data: &Dataset, init: Option<&[f64]>, opts: &FitOptions) -> Result<FitResult> {
    let k = ParamIndexMap::new(Family::Dim, data.p()).mean_dim();
    if data.n() <= k {
        return Err(Error::Degenerate(format!(
            "n = {} leaves no residual degrees of freedom for {k} mean parameters",
            data.n()
        )));
    }
    let start = match init {
        Some(v) if v.len() == k + 1 => Some(&v[..k]),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                what: "DIM initial values",
                expected: k + 1,
                got: v.len(),
            })
        }
        None => None,
    };
    let lm = LmOptions {
        max_iter: opts.max_iter,
        ..LmOptions::default()
    };
    let groups = data.grouped();
    let fit = dim_least_squares(&groups.sample()?, start, &lm)?;
    finish_fit(&groups, Family::Dim, fit.mean_params, fit.rss, fit.iterations, fit.converged)
}

/// `W = n (Cθ̂ − ζ₀)ᵀ {C I⁻¹(θ̂) Cᵀ}⁻¹ (Cθ̂ − ζ₀)` with `info_at` the expected
/// information at the estimates.
pub fn wald_statistic(fit: &FitResult, cs: &ConstraintSpec, info_at: &nalgebra::DMatrix<f64>) -> Result<f64> {
    if !fit.converged {
        return Err(Error::Degenerate("Wald statistic needs a converged fit".into()));
    }
    let d = fit.estimates.len();
    if cs.c().ncols() != d || info_at.nrows() != d {
        return Err(Error::DimensionMismatch {
            what: "Wald statistic inputs",
            expected: d,
            got: cs.c().ncols(),
        });
    }
    let theta = DVector::from_column_slice(&fit.estimates);
    let diff = cs.c() * theta - cs.zeta0();
    let info = SpdSolver::new(info_at)?;
    let middle = SpdSolver::new(&cs.middle(&info))?;
    Ok((fit.n as f64 * diff.dot(&middle.solve_vec(&diff))).max(0.0))
}

fn fit_family(family: Family, data: &Dataset) -> Result<FitResult> {
    match family {
        Family::Pim => fit_pim(data),
        Family::Dim => fit_dim(data, None, &FitOptions::default()),
        Family::Additive => Err(Error::invalid("fit", "must be dim or pim")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicateOutcome {
    Rejected,
    Retained,
    NotConverged,
}

/// Everything one replicate needs, fixed up front.
#[derive(Debug, Clone)]
pub struct ReplicatePlan {
    pub truth: ModelParams,
    pub dist: CovariateDistribution,
    pub fit: Family,
    pub constraint: ConstraintSpec,
    pub critical_value: f64,
    pub n: usize,
    pub seed: u64,
}

impl ReplicatePlan {
    pub fn new(scenario: &PowerScenario, fit: Family, delta: f64, n: usize, seed: u64) -> Result<Self> {
        let constraint = build_constraint(fit, scenario.p())?;
        Ok(Self {
            truth: local_alternative(scenario.truth, &scenario.null, &scenario.eta, delta, n)?,
            dist: scenario.dist.clone(),
            fit,
            critical_value: chisq_quantile(constraint.rank(), scenario.alpha)?,
            constraint,
            n,
            seed,
        })
    }

    /// RNG of replicate `index`: stream `index` of the master seed.
    pub fn rng(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Simulates, fits and tests one replicate. Numerical breakdowns of the
    /// fit count as non-convergence; other errors propagate.
    pub fn run(&self, index: u64) -> Result<ReplicateOutcome> {
        let data = generate_data_with(&self.truth, &self.dist, self.n, &mut self.rng(index))?;
        let outcome = fit_family(self.fit, &data).and_then(|fit| {
            if !fit.converged {
                return Ok(None);
            }
            let info = fisher_information_at(&fit.params()?, &self.dist)?;
            wald_statistic(&fit, &self.constraint, &info).map(Some)
        });
        match outcome {
            Ok(Some(w)) if w > self.critical_value => Ok(ReplicateOutcome::Rejected),
            Ok(Some(_)) => Ok(ReplicateOutcome::Retained),
            Ok(None) => Ok(ReplicateOutcome::NotConverged),
            Err(e) if e.is_numerical() => Ok(ReplicateOutcome::NotConverged),
            Err(e) => Err(e),
        }
    }

    pub fn run_range(&self, range: core::ops::Range<u64>) -> Result<RejectionTally> {
        let mut tally = RejectionTally::default();
        for k in range {
            tally.record(self.run(k)?);
        }
        Ok(tally)
    }
}

/// Integer counts of replicate outcomes; merging is order independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionTally {
    pub rejected: u64,
    pub retained: u64,
    pub nonconverged: u64,
}

impl RejectionTally {
    pub fn record(&mut self, outcome: ReplicateOutcome) {
        match outcome {
            ReplicateOutcome::Rejected => self.rejected += 1,
            ReplicateOutcome::Retained => self.retained += 1,
            ReplicateOutcome::NotConverged => self.nonconverged += 1,
        }
    }

    pub fn merge(&mut self, other: &RejectionTally) {
        self.rejected += other.rejected;
        self.retained += other.retained;
        self.nonconverged += other.nonconverged;
    }

    pub fn reps(&self) -> u64 {
        self.rejected + self.retained + self.nonconverged
    }

    pub fn converged(&self) -> u64 {
        self.rejected + self.retained
    }

    /// Rate over converged replicates with its binomial standard error; fails
    /// when 1% or more of the fits did not converge.
    pub fn summarize(&self) -> Result<RejectionRate> {
        let reps = self.reps();
        if reps == 0 || self.converged() == 0 {
            return Err(Error::ExcessiveNonConvergence {
                failed: self.nonconverged,
                reps,
            });
        }
        if self.nonconverged * 100 >= reps {
            return Err(Error::ExcessiveNonConvergence {
                failed: self.nonconverged,
                reps,
            });
        }
        let m = self.converged() as f64;
        let rate = self.rejected as f64 / m;
        Ok(RejectionRate {
            rate,
            se: libm::sqrt(rate * (1.0 - rate) / m),
            reps,
            nonconverged: self.nonconverged,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionRate {
    pub rate: f64,
    pub se: f64,
    pub reps: u64,
    pub nonconverged: u64,
}

/// Empirical rejection rate of the `fit`-based Wald test at `delta`.
pub fn rejection_rate(
    scenario: &PowerScenario,
    fit: Family,
    delta: f64,
    n: usize,
    reps: u64,
    seed: u64,
) -> Result<RejectionRate> {
    if reps < 100 {
        return Err(Error::invalid("reps", format!("must be >= 100, got {reps}")));
    }
    ReplicatePlan::new(scenario, fit, delta, n, seed)?
        .run_range(0..reps)?
        .summarize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::write_pim_gradient;
    use nalgebra::DMatrix;

    fn null3() -> NullParams {
        NullParams::new(0.0, vec![0.5; 3], 1.0).unwrap()
    }

    fn bern3() -> CovariateDistribution {
        CovariateDistribution::iid_bernoulli(3, 0.5).unwrap()
    }

    #[test]
    fn noiseless_data_follows_the_mean() {
        let truth = ModelParams::Dim(DimParams::new(0.1, vec![0.5; 3], 1.3, 1e-24).unwrap());
        let d = generate_data(&truth, &bern3(), 200, 4).unwrap();
        for i in 0..d.n() {
            assert!((d.y()[i] - truth.mean(d.row(i)).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_delta_gives_identical_data_across_truths() {
        let eta_p = [0.6, 0.0, 0.8];
        let a = local_alternative(Family::Dim, &null3(), &[1.0], 0.0, 100).unwrap();
        let b = local_alternative(Family::Pim, &null3(), &eta_p, 0.0, 100).unwrap();
        assert_eq!(generate_data(&a, &bern3(), 100, 7).unwrap(), generate_data(&b, &bern3(), 100, 7).unwrap());
    }

    #[test]
    fn local_alternative_rejects_nonpositive_lambda() {
        assert!(local_alternative(Family::Dim, &null3(), &[1.0], -20.0, 100).is_err());
        let ok = local_alternative(Family::Dim, &null3(), &[1.0], 2.0, 100).unwrap();
        assert_eq!(ok.to_flat()[4], 1.2);
    }

    #[test]
    fn pim_fit_recovers_noiseless_coefficients() {
        let pim = PimParams::new(0.2, vec![0.5, 0.4, 0.3], vec![0.7, -0.2, 0.1], 1e-20).unwrap();
        let truth = ModelParams::Pim(pim.clone());
        let d = generate_data(&truth, &bern3(), 100, 1).unwrap();
        let fit = fit_pim(&d).unwrap();
        for (a, b) in fit.estimates[4..7].iter().zip(&pim.gamma) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pim_fit_matches_normal_equations() {
        let truth = ModelParams::Pim(PimParams::new(0.2, vec![0.5, 0.4, 0.3], vec![0.1, -0.2, 0.1], 1.0).unwrap());
        let d = generate_data(&truth, &bern3(), 400, 11).unwrap();
        let fit = fit_pim(&d).unwrap();
        let mut xtx = DMatrix::zeros(7, 7);
        let mut xty = DVector::zeros(7);
        let mut row = vec![0.0; 7];
        for i in 0..d.n() {
            write_pim_gradient(d.row(i), &mut row);
            let r = DVector::from_column_slice(&row);
            xtx += &r * r.transpose();
            xty += &r * d.y()[i];
        }
        let beta = xtx.lu().solve(&xty).unwrap();
        for k in 0..7 {
            assert!((beta[k] - fit.estimates[k]).abs() < 1e-8);
        }
        assert!(fit.converged);
        assert!(fit.gradient_norm < 1e-10);
    }

    #[test]
    fn grouping_preserves_rss_and_fit() {
        let d = Dataset::new(1, vec![0.0, 1.0, 1.0, 0.0, 0.0], vec![1.0, 2.0, 3.0, -1.0, 5.0]).unwrap();
        let g = d.grouped();
        assert_eq!(g.x, vec![0.0, 1.0]);
        assert_eq!(g.count, vec![3.0, 2.0]);
        assert!((g.mean[0] - 5.0 / 3.0).abs() < 1e-15 && g.mean[1] == 2.5);
        assert!((g.within_ss - (56.0 / 3.0 + 0.5)).abs() < 1e-13);
    }

    #[test]
    fn pim_square_design_is_degenerate() {
        let x: Vec<f64> = (0..8usize).flat_map(|b| (0..3).map(move |i| ((b >> i) & 1) as f64)).collect();
        let y = vec![0.3, 1.0, -0.2, 0.5, 0.9, 0.1, 0.0, 2.0];
        let d = Dataset::new(3, x.clone(), y.clone()).unwrap();
        // 8 rows but only 7 columns: still one residual degree of freedom
        assert!(fit_pim(&d).is_ok());
        let d7 = Dataset::new(3, x[..21].to_vec(), y[..7].to_vec()).unwrap();
        assert!(matches!(fit_pim(&d7), Err(Error::Degenerate(_))));
    }

    #[test]
    fn dim_fit_recovers_lambda_from_nearly_noiseless_data() {
        let truth = ModelParams::Dim(DimParams::new(0.0, vec![0.5, 0.5, 0.5], 1.5, 1e-16).unwrap());
        let d = generate_data(&truth, &bern3(), 500, 2).unwrap();
        let fit = fit_dim(&d, None, &FitOptions::default()).unwrap();
        assert!((fit.estimates[4] - 1.5).abs() < 1e-4, "{:?}", fit.estimates);
    }

    #[test]
    fn dim_refit_from_optimum_is_a_fixed_point() {
        let truth = local_alternative(Family::Dim, &null3(), &[1.0], 3.0, 2000).unwrap();
        let d = generate_data(&truth, &bern3(), 2000, 5).unwrap();
        let fit = fit_dim(&d, None, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        let again = fit_dim(&d, Some(&fit.estimates), &FitOptions::default()).unwrap();
        assert!(again.loglik - fit.loglik <= 1e-10);
        assert!(again.converged);
    }

    #[test]
    fn dim_fit_rejects_negative_covariates_and_stops_at_cap() {
        let d = Dataset::new(1, vec![1.0, -1.0, 0.5, 2.0, 0.0], vec![0.0; 5]).unwrap();
        assert!(fit_dim(&d, None, &FitOptions::default()).is_err());
        let truth = local_alternative(Family::Dim, &null3(), &[1.0], 1.0, 500).unwrap();
        let d = generate_data(&truth, &bern3(), 500, 8).unwrap();
        let capped = fit_dim(&d, None, &FitOptions { max_iter: 1 }).unwrap();
        assert!(!capped.converged);
    }

    #[test]
    fn wald_zero_when_constraint_holds_and_row_scaling_invariant() {
        let fit = FitResult {
            family: Family::Dim,
            p: 3,
            n: 100,
            estimates: vec![0.0, 0.5, 0.5, 0.5, 1.0, 1.0],
            converged: true,
            loglik: 0.0,
            iterations: 0,
            gradient_norm: 0.0,
        };
        let info = fisher_information_at(&fit.params().unwrap(), &bern3()).unwrap();
        let cs = build_constraint(Family::Dim, 3).unwrap();
        assert_eq!(wald_statistic(&fit, &cs, &info).unwrap(), 0.0);

        let truth = local_alternative(Family::Pim, &null3(), &[0.6, 0.0, -0.8], 4.0, 1000).unwrap();
        let d = generate_data(&truth, &bern3(), 1000, 3).unwrap();
        let fit = fit_pim(&d).unwrap();
        let info = fisher_information_at(&fit.params().unwrap(), &bern3()).unwrap();
        let cs = build_constraint(Family::Pim, 3).unwrap();
        let w = wald_statistic(&fit, &cs, &info).unwrap();
        let scale = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -0.5, 7.0]));
        let scaled = ConstraintSpec::new(&scale * cs.c(), &scale * cs.zeta0()).unwrap();
        let w2 = wald_statistic(&fit, &scaled, &info).unwrap();
        assert!((w - w2).abs() <= 1e-8 * w.max(1.0));
    }

    #[test]
    fn tallies_merge_exactly() {
        let s = PowerScenario::dim_truth(bern3(), null3(), 0.05, vec![0.0]).unwrap();
        let plan = ReplicatePlan::new(&s, Family::Pim, 1.0, 300, 99).unwrap();
        let whole = plan.run_range(0..200).unwrap();
        let mut a = plan.run_range(0..100).unwrap();
        a.merge(&plan.run_range(100..200).unwrap());
        assert_eq!(whole, a);
        let r = whole.summarize().unwrap();
        let h1 = plan.run_range(0..100).unwrap().summarize().unwrap();
        let h2 = plan.run_range(100..200).unwrap().summarize().unwrap();
        let pooled = (h1.rate * (100 - h1.nonconverged) as f64 + h2.rate * (100 - h2.nonconverged) as f64)
            / (200 - r.nonconverged) as f64;
        assert!((pooled - r.rate).abs() < 1e-15);
        assert!(rejection_rate(&s, Family::Pim, 1.0, 300, 50, 1).is_err());
    }

    #[test]
    fn excessive_nonconvergence_is_an_error() {
        let t = RejectionTally {
            rejected: 5,
            retained: 94,
            nonconverged: 1,
        };
        assert!(matches!(t.summarize(), Err(Error::ExcessiveNonConvergence { .. })));
        let t = RejectionTally {
            rejected: 5,
            retained: 195,
            nonconverged: 1,
        };
        assert!(t.summarize().is_ok());
    }
}
