//! Covariate distributions and expectations of score outer products.
//!
//! For normal errors the expectation over `Y | X` is closed form: the mean
//! block of `E[s_F s_Gᵀ]` is `E_X[g_F g_Gᵀ] / σ²`, the σ² entry is `1/(2σ⁴)`
//! and the mean–σ² entries vanish. Only the sum (or Monte Carlo average) over
//! `X` is numerical.

use crate::models::{mean_gradient_at_null_into, Family, ModelParams, NullParams, ParamIndexMap};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact enumeration is refused above this many binary covariates.
pub const MAX_ENUMERATED_COVARIATES: usize = 24;

/// Tolerance on the total mass of an explicit support.
const MASS_TOLERANCE: f64 = 1e-12;

/// Law used to draw covariate vectors by simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Independent Bernoulli coordinates with the given success probabilities.
    Bernoulli(Vec<f64>),
    /// Independent Uniform(lo, hi) coordinates.
    Uniform { dim: usize, lo: f64, hi: f64 },
    /// Independent exponential coordinates with the given rate.
    Exponential { dim: usize, rate: f64 },
    /// Draws from a finite support.
    Discrete(Vec<(Vec<f64>, f64)>),
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::Bernoulli(q) => q.len(),
            Generator::Uniform { dim, .. } | Generator::Exponential { dim, .. } => *dim,
            Generator::Discrete(s) => s.first().map_or(0, |(x, _)| x.len()),
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Generator::Bernoulli(q) => {
                for (o, qi) in out.iter_mut().zip(q) {
                    *o = if rng.random::<f64>() < *qi { 1.0 } else { 0.0 };
                }
            }
            Generator::Uniform { lo, hi, .. } => {
                for o in out.iter_mut() {
                    *o = lo + (hi - lo) * rng.random::<f64>();
                }
            }
            Generator::Exponential { rate, .. } => {
                for o in out.iter_mut() {
                    // 1 - u lies in (0, 1]
                    *o = -libm::log(1.0 - rng.random::<f64>()) / rate;
                }
            }
            Generator::Discrete(support) => sample_discrete(support, rng, out),
        }
    }
}

fn sample_discrete<R: Rng + ?Sized>(support: &[(Vec<f64>, f64)], rng: &mut R, out: &mut [f64]) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = support.len() - 1;
    for (k, (_, w)) in support.iter().enumerate() {
        acc += w;
        if u < acc {
            chosen = k;
            break;
        }
    }
    out.copy_from_slice(&support[chosen].0);
}

/// Law of the covariate vector `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateDistribution {
    ProductBernoulli { q: Vec<f64> },
    ExplicitDiscrete { support: Vec<(Vec<f64>, f64)> },
    /// Only reachable by simulation; expectations use `mc_samples` draws.
    Sampleable {
        generator: Generator,
        mc_samples: usize,
        seed: u64,
    },
}

fn validate_discrete(support: &[(Vec<f64>, f64)]) -> Result<()> {
    let Some((first, _)) = support.first() else {
        return Err(Error::invalid("support", "must not be empty"));
    };
    let p = first.len();
    let mut mass = 0.0;
    for (x, w) in support {
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                what: "support point",
                expected: p,
                got: x.len(),
            });
        }
        if !(*w >= 0.0) {
            return Err(Error::invalid("support", format!("negative probability {w}")));
        }
        mass += w;
    }
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid("support", format!("probabilities sum to {mass}, not 1")));
    }
    Ok(())
}

impl CovariateDistribution {
    pub fn product_bernoulli(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("q", "at least one covariate is required"));
        }
        if let Some(v) = q.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::invalid("q", format!("must lie in (0, 1), got {v}")));
        }
        Ok(Self::ProductBernoulli { q })
    }

    /// `p` independent Bernoulli(q) covariates.
    pub fn iid_bernoulli(p: usize, q: f64) -> Result<Self> {
        Self::product_bernoulli(vec![q; p])
    }

    pub fn explicit(support: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        validate_discrete(&support)?;
        Ok(Self::ExplicitDiscrete { support })
    }

    pub fn sampleable(generator: Generator, mc_samples: usize, seed: u64) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be >= 1"));
        }
        match &generator {
            Generator::Bernoulli(q) => {
                Self::product_bernoulli(q.clone())?;
            }
            Generator::Uniform { lo, hi, .. } if !(lo < hi) => {
                return Err(Error::invalid("uniform", "requires lo < hi"));
            }
            Generator::Exponential { rate, .. } if !(*rate > 0.0) => {
                return Err(Error::invalid("exponential", "rate must be > 0"));
            }
            Generator::Discrete(s) => validate_discrete(s)?,
            _ => {}
        }
        Ok(Self::Sampleable {
            generator,
            mc_samples,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::ProductBernoulli { q } => q.len(),
            Self::ExplicitDiscrete { support } => support[0].0.len(),
            Self::Sampleable { generator, .. } => generator.dim(),
        }
    }

    /// Draws one covariate vector.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::ProductBernoulli { q } => {
                for (o, qi) in out.iter_mut().zip(q) {
                    *o = if rng.random::<f64>() < *qi { 1.0 } else { 0.0 };
                }
            }
            Self::ExplicitDiscrete { support } => sample_discrete(support, rng, out),
            Self::Sampleable { generator, .. } => generator.sample_into(rng, out),
        }
    }

    /// Whether every covariate draw is componentwise nonnegative.
    pub fn nonnegative(&self) -> bool {
        match self {
            Self::ProductBernoulli { .. } => true,
            Self::ExplicitDiscrete { support } => {
                support.iter().all(|(x, _)| x.iter().all(|v| *v >= 0.0))
            }
            Self::Sampleable { generator, .. } => match generator {
                Generator::Bernoulli(_) | Generator::Exponential { .. } => true,
                Generator::Uniform { lo, .. } => *lo >= 0.0,
                Generator::Discrete(s) => s.iter().all(|(x, _)| x.iter().all(|v| *v >= 0.0)),
            },
        }
    }
}

/// Finite support of an enumerable distribution, generated lazily.
///
/// Product-Bernoulli points are ordered by binary counting with `x₁` as the
/// least significant bit.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    Bernoulli(&'a [f64]),
    Explicit(&'a [(Vec<f64>, f64)]),
}

impl<'a> Support<'a> {
    pub fn len(&self) -> usize {
        match self {
            Support::Bernoulli(q) => 1usize << q.len(),
            Support::Explicit(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p(&self) -> usize {
        match self {
            Support::Bernoulli(q) => q.len(),
            Support::Explicit(s) => s[0].0.len(),
        }
    }

    /// Writes point `index` into `x` and returns its probability.
    pub fn point_into(&self, index: usize, x: &mut [f64]) -> f64 {
        match self {
            Support::Bernoulli(q) => {
                let mut prob = 1.0;
                for (i, (xi, qi)) in x.iter_mut().zip(q.iter()).enumerate() {
                    if (index >> i) & 1 == 1 {
                        *xi = 1.0;
                        prob *= qi;
                    } else {
                        *xi = 0.0;
                        prob *= 1.0 - qi;
                    }
                }
                prob
            }
            Support::Explicit(s) => {
                x.copy_from_slice(&s[index].0);
                s[index].1
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + 'a {
        let this = *self;
        (0..this.len()).filter_map(move |k| {
            let mut x = vec![0.0; this.p()];
            let w = this.point_into(k, &mut x);
            (w > 0.0).then_some((x, w))
        })
    }

    pub fn to_vec(&self) -> Vec<(Vec<f64>, f64)> {
        self.iter().collect()
    }
}

/// Complete finite support of `dist`.
pub fn enumerate_support(dist: &CovariateDistribution) -> Result<Support<'_>> {
    match dist {
        CovariateDistribution::ProductBernoulli { q } => {
            if q.len() > MAX_ENUMERATED_COVARIATES {
                return Err(Error::TooManyCovariates {
                    p: q.len(),
                    max: MAX_ENUMERATED_COVARIATES,
                });
            }
            Ok(Support::Bernoulli(q))
        }
        CovariateDistribution::ExplicitDiscrete { support } => Ok(Support::Explicit(support)),
        CovariateDistribution::Sampleable { .. } => Err(Error::NotEnumerable),
    }
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// Compensated running sum of weighted gradient outer products `w g_F g_Gᵀ`.
///
/// Partial accumulators over disjoint index ranges can be merged, so the
/// support sum may be split across threads.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    rows: usize,
    cols: usize,
    symmetric: bool,
    sum: Vec<f64>,
    comp: Vec<f64>,
    weight: f64,
    weight_comp: f64,
    count: u64,
}

impl MomentAccumulator {
    pub fn new(rows: usize, cols: usize, symmetric: bool) -> Self {
        Self {
            rows,
            cols,
            symmetric: symmetric && rows == cols,
            sum: vec![0.0; rows * cols],
            comp: vec![0.0; rows * cols],
            weight: 0.0,
            weight_comp: 0.0,
            count: 0,
        }
    }

    /// Adds `w · gf gfᵀ` (or `w · gf ggᵀ`), skipping zero entries.
    pub fn add(&mut self, w: f64, gf: &[f64], gg: &[f64], nz_f: &mut Vec<usize>, nz_g: &mut Vec<usize>) {
        nz_f.clear();
        nz_f.extend((0..gf.len()).filter(|&i| gf[i] != 0.0));
        nz_g.clear();
        nz_g.extend((0..gg.len()).filter(|&j| gg[j] != 0.0));
        for &i in nz_f.iter() {
            let wi = w * gf[i];
            let row = i * self.cols;
            for &j in nz_g.iter() {
                if self.symmetric && j < i {
                    continue;
                }
                neumaier(&mut self.sum[row + j], &mut self.comp[row + j], wi * gg[j]);
            }
        }
        neumaier(&mut self.weight, &mut self.weight_comp, w);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for k in 0..self.sum.len() {
            neumaier(&mut self.sum[k], &mut self.comp[k], other.sum[k]);
            self.comp[k] += other.comp[k];
        }
        neumaier(&mut self.weight, &mut self.weight_comp, other.weight);
        self.weight_comp += other.weight_comp;
        self.count += other.count;
    }

    pub fn total_weight(&self) -> f64 {
        self.weight + self.weight_comp
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// The accumulated `Σ w g_F g_Gᵀ`, each entry divided by `divisor`.
    pub fn block(&self, divisor: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.symmetric && j < i {
                    continue;
                }
                let k = i * self.cols + j;
                let v = (self.sum[k] + self.comp[k]) / divisor;
                m[(i, j)] = v;
                if self.symmetric {
                    m[(j, i)] = v;
                }
            }
        }
        m
    }
}

/// Mean block `block / σ²` bordered by the σ² coordinate.
pub fn assemble_score_moment(mean_block: &DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    let (r, c) = mean_block.shape();
    let mut out = DMatrix::zeros(r + 1, c + 1);
    out.view_mut((0, 0), (r, c)).copy_from(&(mean_block / sigma2));
    out[(r, c)] = 1.0 / (2.0 * sigma2 * sigma2);
    out
}

fn check_params(params: &NullParams, dist: &CovariateDistribution, families: &[Family]) -> Result<()> {
    if params.p() != dist.dim() {
        return Err(Error::DimensionMismatch {
            what: "covariate distribution",
            expected: params.p(),
            got: dist.dim(),
        });
    }
    if families.contains(&Family::Dim) && !dist.nonnegative() {
        return Err(Error::Domain("the DIM needs nonnegative covariates".into()));
    }
    Ok(())
}

/// Sums `P(x) g_F(x) g_G(x)ᵀ` over support points `range` at the null.
pub fn accumulate_null_gradients(
    fit: Family,
    truth: Family,
    params: &NullParams,
    support: &Support<'_>,
    range: Range<usize>,
) -> Result<MomentAccumulator> {
    let p = params.p();
    let rows = ParamIndexMap::new(fit, p).mean_dim();
    let cols = ParamIndexMap::new(truth, p).mean_dim();
    let mut acc = MomentAccumulator::new(rows, cols, fit == truth);
    let mut x = vec![0.0; p];
    let mut gf = vec![0.0; rows];
    let mut gg = vec![0.0; cols];
    let (mut nz_f, mut nz_g) = (Vec::with_capacity(rows), Vec::with_capacity(cols));
    for k in range {
        let w = support.point_into(k, &mut x);
        if w == 0.0 {
            continue;
        }
        mean_gradient_at_null_into(fit, params, &x, &mut gf)?;
        if fit == truth {
            acc.add(w, &gf, &gf, &mut nz_f, &mut nz_g);
        } else {
            mean_gradient_at_null_into(truth, params, &x, &mut gg)?;
            acc.add(w, &gf, &gg, &mut nz_f, &mut nz_g);
        }
    }
    Ok(acc)
}

/// `E_{θ₀}[s_F s_Gᵀ]` at the additive null, in the two families' index orders.
pub fn cross_moment(
    fit: Family,
    truth: Family,
    params: &NullParams,
    dist: &CovariateDistribution,
) -> Result<DMatrix<f64>> {
    check_params(params, dist, &[fit, truth])?;
    match dist {
        CovariateDistribution::Sampleable {
            generator,
            mc_samples,
            seed,
        } => mc_cross_moment(fit, truth, params, generator, *mc_samples, *seed),
        _ => {
            let support = enumerate_support(dist)?;
            let acc = accumulate_null_gradients(fit, truth, params, &support, 0..support.len())?;
            Ok(assemble_score_moment(&acc.block(1.0), params.sigma2()))
        }
    }
}

/// Fisher information of `family` at the additive null.
pub fn fisher_information(
    family: Family,
    params: &NullParams,
    dist: &CovariateDistribution,
) -> Result<DMatrix<f64>> {
    cross_moment(family, family, params, dist)
}

/// Monte Carlo version of [`cross_moment`]: `n_samples` covariate draws,
/// closed-form moments over `Y | X`. Deterministic in `seed`.
pub fn mc_cross_moment(
    fit: Family,
    truth: Family,
    params: &NullParams,
    generator: &Generator,
    n_samples: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be >= 1"));
    }
    let p = params.p();
    if generator.dim() != p {
        return Err(Error::DimensionMismatch {
            what: "generator",
            expected: p,
            got: generator.dim(),
        });
    }
    let rows = ParamIndexMap::new(fit, p).mean_dim();
    let cols = ParamIndexMap::new(truth, p).mean_dim();
    let mut acc = MomentAccumulator::new(rows, cols, fit == truth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; p];
    let mut gf = vec![0.0; rows];
    let mut gg = vec![0.0; cols];
    let (mut nz_f, mut nz_g) = (Vec::new(), Vec::new());
    for _ in 0..n_samples {
        generator.sample_into(&mut rng, &mut x);
        mean_gradient_at_null_into(fit, params, &x, &mut gf)?;
        mean_gradient_at_null_into(truth, params, &x, &mut gg)?;
        acc.add(1.0, &gf, &gg, &mut nz_f, &mut nz_g);
    }
    Ok(assemble_score_moment(&acc.block(n_samples as f64), params.sigma2()))
}

/// Expected Fisher information of a model at an arbitrary parameter point,
/// under the given covariate law.
pub fn fisher_information_at(params: &ModelParams, dist: &CovariateDistribution) -> Result<DMatrix<f64>> {
    let p = params.p();
    if p != dist.dim() {
        return Err(Error::DimensionMismatch {
            what: "covariate distribution",
            expected: p,
            got: dist.dim(),
        });
    }
    let d = params.index_map().mean_dim();
    let mut acc = MomentAccumulator::new(d, d, true);
    let mut x = vec![0.0; p];
    let mut g = vec![0.0; d];
    let (mut nz_f, mut nz_g) = (Vec::new(), Vec::new());
    let divisor = match dist {
        CovariateDistribution::Sampleable {
            generator,
            mc_samples,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..*mc_samples {
                generator.sample_into(&mut rng, &mut x);
                params.mean_gradient_into(&x, &mut g)?;
                acc.add(1.0, &g, &g, &mut nz_f, &mut nz_g);
            }
            *mc_samples as f64
        }
        _ => {
            let support = enumerate_support(dist)?;
            for k in 0..support.len() {
                let w = support.point_into(k, &mut x);
                params.mean_gradient_into(&x, &mut g)?;
                acc.add(w, &g, &g, &mut nz_f, &mut nz_g);
            }
            1.0
        }
    };
    Ok(assemble_score_moment(&acc.block(divisor), params.sigma2()))
}

/// Fitted-family and true-family information plus their cross moment.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub fit: ParamIndexMap,
    pub truth: ParamIndexMap,
    pub info_fit: DMatrix<f64>,
    pub info_truth: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

impl MomentSet {
    pub fn compute(
        fit: Family,
        truth: Family,
        params: &NullParams,
        dist: &CovariateDistribution,
    ) -> Result<Self> {
        let info_fit = fisher_information(fit, params, dist)?;
        let (info_truth, cross) = if fit == truth {
            (info_fit.clone(), info_fit.clone())
        } else {
            (
                fisher_information(truth, params, dist)?,
                cross_moment(fit, truth, params, dist)?,
            )
        };
        Ok(Self {
            fit: ParamIndexMap::new(fit, params.p()),
            truth: ParamIndexMap::new(truth, params.p()),
            info_fit,
            info_truth,
            cross,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use nalgebra::SymmetricEigen;

    fn half(p: usize) -> NullParams {
        NullParams::new(0.0, vec![0.5; p], 1.0).unwrap()
    }

    #[test]
    fn bernoulli_support() {
        let d = CovariateDistribution::iid_bernoulli(1, 0.5).unwrap();
        assert_eq!(
            enumerate_support(&d).unwrap().to_vec(),
            vec![(vec![0.0], 0.5), (vec![1.0], 0.5)]
        );
        let d = CovariateDistribution::iid_bernoulli(9, 0.5).unwrap();
        let pts = enumerate_support(&d).unwrap().to_vec();
        assert_eq!(pts.len(), 512);
        assert!(pts.iter().all(|(_, w)| *w == 1.0 / 512.0));
        assert_eq!(pts[5].0[..3], [1.0, 0.0, 1.0]);
        let total: f64 = pts.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_support_echoed() {
        let s = vec![(vec![0.0, 1.0], 0.3), (vec![1.0, 1.0], 0.7)];
        let d = CovariateDistribution::explicit(s.clone()).unwrap();
        assert_eq!(enumerate_support(&d).unwrap().to_vec(), s);
        assert!(CovariateDistribution::explicit(vec![(vec![0.0], 0.3), (vec![1.0], 0.6)]).is_err());
        assert!(CovariateDistribution::explicit(vec![(vec![0.0], -0.3), (vec![1.0], 1.3)]).is_err());
    }

    #[test]
    fn enumeration_guards() {
        let d = CovariateDistribution::sampleable(Generator::Uniform { dim: 2, lo: 0.0, hi: 1.0 }, 10, 1)
            .unwrap();
        assert!(matches!(enumerate_support(&d), Err(Error::NotEnumerable)));
        let d = CovariateDistribution::iid_bernoulli(25, 0.5).unwrap();
        assert!(matches!(
            enumerate_support(&d),
            Err(Error::TooManyCovariates { p: 25, .. })
        ));
        assert!(CovariateDistribution::iid_bernoulli(3, 1.0).is_err());
    }

    #[test]
    fn additive_information_single_covariate() {
        let d = CovariateDistribution::iid_bernoulli(1, 0.5).unwrap();
        let info = fisher_information(Family::Additive, &half(1), &d).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.5]);
        assert!(max_abs_diff(&info, &want) < 1e-15);
    }

    #[test]
    fn sigma_scaling_of_information() {
        let d = CovariateDistribution::iid_bernoulli(3, 0.5).unwrap();
        let base = NullParams::new(0.2, vec![0.5, 0.3, 0.9], 1.0).unwrap();
        for fam in [Family::Additive, Family::Dim, Family::Pim] {
            let i1 = fisher_information(fam, &base, &d).unwrap();
            let i4 = fisher_information(fam, &base.with_sigma2(4.0).unwrap(), &d).unwrap();
            let n = i1.nrows();
            for r in 0..n {
                for c in 0..n {
                    let factor = if r == n - 1 && c == n - 1 { 16.0 } else { 4.0 };
                    assert!((i4[(r, c)] * factor - i1[(r, c)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn information_symmetric_psd_and_nested() {
        let d = CovariateDistribution::iid_bernoulli(9, 0.5).unwrap();
        let null = half(9);
        let add = fisher_information(Family::Additive, &null, &d).unwrap();
        for fam in [Family::Dim, Family::Pim] {
            let info = fisher_information(fam, &null, &d).unwrap();
            assert!(max_abs_diff(&info, &info.transpose()) <= 1e-12);
            let eig = SymmetricEigen::new(info.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            assert!((0..info.nrows()).all(|k| info[(k, k)] > 0.0));
            // Additive block: mean coordinates 0..=p plus sigma2.
            let map = ParamIndexMap::new(fam, 9);
            let idx: Vec<usize> = (0..=9).chain([map.sigma2_index()]).collect();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    assert!((info[(i, j)] - add[(a, b)]).abs() < 1e-12);
                }
            }
            let cross = cross_moment(fam, fam, &null, &d).unwrap();
            assert!(max_abs_diff(&cross, &info) <= 1e-12);
        }
    }

    #[test]
    fn cross_moment_transposes() {
        let d = CovariateDistribution::iid_bernoulli(4, 0.5).unwrap();
        let null = half(4);
        let dp = cross_moment(Family::Dim, Family::Pim, &null, &d).unwrap();
        let pd = cross_moment(Family::Pim, Family::Dim, &null, &d).unwrap();
        assert_eq!(dp.shape(), (7, 12));
        assert!(max_abs_diff(&dp, &pd.transpose()) < 1e-15);
    }

    #[test]
    fn mc_moment_deterministic_and_rank_one() {
        let gen = Generator::Bernoulli(vec![0.5; 4]);
        let a = mc_cross_moment(Family::Dim, Family::Pim, &half(4), &gen, 500, 9).unwrap();
        let b = mc_cross_moment(Family::Dim, Family::Pim, &half(4), &gen, 500, 9).unwrap();
        assert_eq!(a, b);
        let one = mc_cross_moment(Family::Pim, Family::Pim, &half(4), &gen, 1, 3).unwrap();
        let rank = one.clone().svd(false, false).rank(1e-12);
        assert!(rank <= 2, "rank {rank}");
    }

    #[test]
    fn split_accumulation_matches_whole() {
        let d = CovariateDistribution::iid_bernoulli(8, 0.3).unwrap();
        let null = half(8);
        let s = enumerate_support(&d).unwrap();
        let whole = accumulate_null_gradients(Family::Pim, Family::Pim, &null, &s, 0..s.len()).unwrap();
        let mut left = accumulate_null_gradients(Family::Pim, Family::Pim, &null, &s, 0..77).unwrap();
        let right = accumulate_null_gradients(Family::Pim, Family::Pim, &null, &s, 77..s.len()).unwrap();
        left.merge(&right);
        let a = whole.block(1.0);
        let b = left.block(1.0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
        assert!((left.total_weight() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn information_at_null_point_matches() {
        let d = CovariateDistribution::iid_bernoulli(3, 0.5).unwrap();
        let null = NullParams::new(0.1, vec![0.5, 0.6, 0.7], 1.5).unwrap();
        for fam in [Family::Dim, Family::Pim] {
            let a = fisher_information(fam, &null, &d).unwrap();
            let b = fisher_information_at(&null.embed(fam), &d).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-14);
        }
    }

    #[test]
    fn dim_rejects_negative_covariates() {
        let d = CovariateDistribution::explicit(vec![(vec![-1.0, 1.0], 0.5), (vec![1.0, 1.0], 0.5)]).unwrap();
        assert!(fisher_information(Family::Dim, &half(2), &d).is_err());
        assert!(fisher_information(Family::Pim, &half(2), &d).is_ok());
    }
}
