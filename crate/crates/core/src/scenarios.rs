//! The DIM-vs-PIM comparison designs: constraint matrices for the two
//! interaction tests, interaction directions built from the three primary
//! factors, and power curves over a grid of Δ.

use crate::asymptotics::{
    chisq_quantile, kl_projection_derivative, noncentral_chisq_sf, noncentrality, reduced_noncentrality,
    ConstraintSpec, Direction,
};
use crate::expectation::{cross_moment, fisher_information, CovariateDistribution, MomentSet};
use crate::models::{pair_count, Family, NullParams, ParamIndexMap};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Significance level used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// The paper-style factor levels: (0.2, 0.5, 0.8) for the first two factors,
/// (0.5, 1, 2) for the magnitude ratio.
pub const DEFAULT_F1_LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
pub const DEFAULT_F2_LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
pub const DEFAULT_F3_LEVELS: [f64; 3] = [0.5, 1.0, 2.0];

/// Bounds and size of the default Δ grid. On the λ scale the unit
/// noncentrality of the nine-covariate DIM test is about 0.04, so power only
/// approaches one for |Δ| near 30.
pub const DEFAULT_DELTA_MAX: f64 = 30.0;
pub const DEFAULT_DELTA_STEPS: usize = 61;

/// 61 points, uniform on [−30, 30] with unit spacing.
pub fn default_delta_grid() -> Vec<f64> {
    linear_grid(-DEFAULT_DELTA_MAX, DEFAULT_DELTA_MAX, DEFAULT_DELTA_STEPS).expect("static grid is valid")
}

/// `steps` points from `min` to `max` inclusive. A grid symmetric about zero
/// is exactly antisymmetric in floating point.
pub fn linear_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::invalid("delta grid", "bounds must be finite"));
    }
    match steps {
        0 => Err(Error::invalid("delta grid", "needs at least one point")),
        1 if min == max => Ok(vec![min]),
        1 => Err(Error::invalid("delta grid", "a single point needs min = max")),
        _ if !(min < max) => Err(Error::invalid("delta grid", "needs min < max")),
        _ => {
            let last = (steps - 1) as f64;
            Ok((0..steps)
                .map(|i| (min * (last - i as f64) + max * i as f64) / last)
                .collect())
        }
    }
}

/// Shape of the pairwise-interaction direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimaryFactors {
    /// Proportion of nonzero entries.
    pub f1: f64,
    /// Proportion of the nonzero entries that are positive.
    pub f2: f64,
    /// Positive magnitude over negative magnitude.
    pub f3: f64,
}

impl PrimaryFactors {
    pub fn new(f1: f64, f2: f64, f3: f64) -> Result<Self> {
        if !(f1 > 0.0 && f1 <= 1.0) {
            return Err(Error::invalid("f1", format!("must lie in (0, 1], got {f1}")));
        }
        if !(0.0..=1.0).contains(&f2) {
            return Err(Error::invalid("f2", format!("must lie in [0, 1], got {f2}")));
        }
        if !(f3 > 0.0 && f3.is_finite()) {
            return Err(Error::invalid("f3", format!("must be > 0, got {f3}")));
        }
        Ok(Self { f1, f2, f3 })
    }
}

/// Selector of the interaction coordinates of `fit`: λ = 1 for the DIM,
/// γ = 0 for the PIM.
pub fn build_constraint(fit: Family, p: usize) -> Result<ConstraintSpec> {
    if p < 2 {
        return Err(Error::invalid("p", format!("interaction tests need p >= 2, got {p}")));
    }
    let map = ParamIndexMap::new(fit, p);
    let (r, zeta) = match fit {
        Family::Dim => (1, 1.0),
        Family::Pim => (pair_count(p), 0.0),
        Family::Additive => {
            return Err(Error::invalid("fit", "the additive model has no interaction to test"));
        }
    };
    let mut c = DMatrix::zeros(r, map.dim());
    for (row, col) in map.interaction_range().enumerate() {
        c[(row, col)] = 1.0;
    }
    ConstraintSpec::new(c, DVector::from_element(r, zeta))
}

/// Unit direction over the `p(p−1)/2` pairwise coefficients: zeros, then the
/// positive block, then the negative block. Counts round half away from zero.
pub fn build_eta_from_factors(p: usize, f: &PrimaryFactors) -> Result<Vec<f64>> {
    let m = pair_count(p);
    let k = (libm::round(f.f1 * m as f64) as usize).min(m);
    if k == 0 {
        return Err(Error::invalid(
            "f1",
            format!("{} of {m} pairs rounds to no nonzero entries", f.f1),
        ));
    }
    let k_pos = (libm::round(f.f2 * k as f64) as usize).min(k);
    let k_neg = k - k_pos;
    let c = 1.0 / libm::sqrt(k_pos as f64 * f.f3 * f.f3 + k_neg as f64);
    let mut eta = vec![0.0; m];
    for v in &mut eta[m - k..m - k_neg] {
        *v = f.f3 * c;
    }
    for v in &mut eta[m - k_neg..] {
        *v = -c;
    }
    Ok(eta)
}

/// Places an interaction-space direction into the full parameter space of
/// `truth`.
pub fn embed_direction(truth: Family, p: usize, interaction: &[f64]) -> Result<DVector<f64>> {
    let map = ParamIndexMap::new(truth, p);
    let range = map.interaction_range();
    if interaction.len() != range.len() || range.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "interaction direction",
            expected: range.len(),
            got: interaction.len(),
        });
    }
    let mut eta = DVector::zeros(map.dim());
    for (k, v) in range.zip(interaction) {
        eta[k] = *v;
    }
    Ok(eta)
}

/// One asymptotic power computation, minus the fitted family.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerScenario {
    pub dist: CovariateDistribution,
    pub null: NullParams,
    pub truth: Family,
    /// Direction over the true family's interaction parameters (`[1.0]` for a
    /// DIM truth).
    pub eta: Vec<f64>,
    pub alpha: f64,
    pub delta_grid: Vec<f64>,
}

impl PowerScenario {
    pub fn new(
        dist: CovariateDistribution,
        null: NullParams,
        truth: Family,
        eta: Vec<f64>,
        alpha: f64,
        delta_grid: Vec<f64>,
    ) -> Result<Self> {
        let p = null.p();
        if dist.dim() != p {
            return Err(Error::DimensionMismatch {
                what: "covariate distribution",
                expected: p,
                got: dist.dim(),
            });
        }
        if truth == Family::Additive {
            return Err(Error::invalid("truth", "must be dim or pim"));
        }
        let eta_full = embed_direction(truth, p, &eta)?;
        Direction::new(eta_full, 1.0)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if delta_grid.is_empty() {
            return Err(Error::invalid("delta grid", "must not be empty"));
        }
        if delta_grid.iter().any(|d| !d.is_finite()) || delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("delta grid", "must be finite and strictly increasing"));
        }
        Ok(Self {
            dist,
            null,
            truth,
            eta,
            alpha,
            delta_grid,
        })
    }

    /// A DIM truth; its one-dimensional direction is λ itself.
    pub fn dim_truth(dist: CovariateDistribution, null: NullParams, alpha: f64, delta_grid: Vec<f64>) -> Result<Self> {
        Self::new(dist, null, Family::Dim, vec![1.0], alpha, delta_grid)
    }

    pub fn pim_truth(
        dist: CovariateDistribution,
        null: NullParams,
        factors: &PrimaryFactors,
        alpha: f64,
        delta_grid: Vec<f64>,
    ) -> Result<Self> {
        let eta = build_eta_from_factors(null.p(), factors)?;
        Self::new(dist, null, Family::Pim, eta, alpha, delta_grid)
    }

    pub fn p(&self) -> usize {
        self.null.p()
    }

    pub fn direction(&self, delta: f64) -> Result<Direction> {
        Direction::new(embed_direction(self.truth, self.p(), &self.eta)?, delta)
    }
}

/// Null-point moments shared by every DIM/PIM fit–truth pairing.
#[derive(Debug, Clone)]
pub struct ScenarioMoments {
    pub p: usize,
    pub info_dim: DMatrix<f64>,
    pub info_pim: DMatrix<f64>,
    /// `E[s_DIM s_PIMᵀ]`; the PIM–DIM moment is its transpose.
    pub cross_dim_pim: DMatrix<f64>,
}

impl ScenarioMoments {
    pub fn compute(null: &NullParams, dist: &CovariateDistribution) -> Result<Self> {
        Ok(Self {
            p: null.p(),
            info_dim: fisher_information(Family::Dim, null, dist)?,
            info_pim: fisher_information(Family::Pim, null, dist)?,
            cross_dim_pim: cross_moment(Family::Dim, Family::Pim, null, dist)?,
        })
    }

    pub fn info(&self, family: Family) -> Result<&DMatrix<f64>> {
        match family {
            Family::Dim => Ok(&self.info_dim),
            Family::Pim => Ok(&self.info_pim),
            Family::Additive => Err(Error::invalid("family", "must be dim or pim")),
        }
    }

    pub fn cross(&self, fit: Family, truth: Family) -> Result<DMatrix<f64>> {
        match (fit, truth) {
            (Family::Dim, Family::Pim) => Ok(self.cross_dim_pim.clone()),
            (Family::Pim, Family::Dim) => Ok(self.cross_dim_pim.transpose()),
            (a, b) if a == b => Ok(self.info(a)?.clone()),
            _ => Err(Error::invalid("family", "must be dim or pim")),
        }
    }

    pub fn moment_set(&self, fit: Family, truth: Family) -> Result<MomentSet> {
        Ok(MomentSet {
            fit: ParamIndexMap::new(fit, self.p),
            truth: ParamIndexMap::new(truth, self.p),
            info_fit: self.info(fit)?.clone(),
            info_truth: self.info(truth)?.clone(),
            cross: self.cross(fit, truth)?,
        })
    }
}

/// How the noncentrality is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoncentralityPath {
    /// Through the KL-projection derivative `I_F⁻¹ E[s_F s_Gᵀ]`.
    General,
    /// The correctly specified shortcut (`fit == truth` only).
    Reduced,
}

/// Noncentrality at Δ = 1; δ(Δ) is Δ² times this.
pub fn unit_noncentrality(
    moments: &ScenarioMoments,
    fit: Family,
    truth: Family,
    eta: &[f64],
    path: NoncentralityPath,
) -> Result<f64> {
    let p = moments.p;
    let cs = build_constraint(fit, p)?;
    let dir = Direction::new(embed_direction(truth, p, eta)?, 1.0)?;
    let info = moments.info(fit)?;
    match path {
        NoncentralityPath::General => {
            let dtheta = kl_projection_derivative(info, &moments.cross(fit, truth)?)?;
            noncentrality(&dir, &cs, info, &dtheta)
        }
        NoncentralityPath::Reduced if fit == truth => reduced_noncentrality(&dir, &cs, info),
        NoncentralityPath::Reduced => Err(Error::invalid(
            "path",
            "the reduced formula needs fit == truth",
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub delta: f64,
    pub noncentrality: f64,
    pub power: f64,
}

/// Power of one fitted family's test along the scenario's Δ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub fit: Family,
    pub truth: Family,
    pub dof: usize,
    pub critical_value: f64,
    pub unit_noncentrality: f64,
    pub rows: Vec<PowerPoint>,
}

impl PowerTable {
    pub fn powers(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.power)
    }
}

fn power_context(err: Error, fit: Family, truth: Family, p: usize) -> Error {
    err.context(format!("power curve for {fit} fit under {truth} truth (p = {p})"))
}

/// Power curve from precomputed null moments.
pub fn power_curve_with(moments: &ScenarioMoments, scenario: &PowerScenario, fit: Family) -> Result<PowerTable> {
    let path = if fit == scenario.truth {
        NoncentralityPath::Reduced
    } else {
        NoncentralityPath::General
    };
    power_curve_via(moments, scenario, fit, path)
}

/// As [`power_curve_with`] with an explicit noncentrality path.
pub fn power_curve_via(
    moments: &ScenarioMoments,
    scenario: &PowerScenario,
    fit: Family,
    path: NoncentralityPath,
) -> Result<PowerTable> {
    let truth = scenario.truth;
    let p = scenario.p();
    let build = || -> Result<PowerTable> {
        let unit = unit_noncentrality(moments, fit, truth, &scenario.eta, path)?;
        let dof = build_constraint(fit, p)?.rank();
        let critical_value = chisq_quantile(dof, scenario.alpha)?;
        let rows = scenario
            .delta_grid
            .iter()
            .map(|&delta| {
                let nc = delta * delta * unit;
                Ok(PowerPoint {
                    delta,
                    noncentrality: nc,
                    power: noncentral_chisq_sf(critical_value, dof, nc)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PowerTable {
            fit,
            truth,
            dof,
            critical_value,
            unit_noncentrality: unit,
            rows,
        })
    };
    build().map_err(|e| power_context(e, fit, truth, p))
}

/// Power curve of the `fit`-based test; computes the null moments itself.
pub fn power_curve(scenario: &PowerScenario, fit: Family) -> Result<PowerTable> {
    let moments = ScenarioMoments::compute(&scenario.null, &scenario.dist)
        .map_err(|e| power_context(e, fit, scenario.truth, scenario.p()))?;
    power_curve_with(&moments, scenario, fit)
}

/// Factor levels for the pairwise-truth sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLevels {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

impl Default for FactorLevels {
    fn default() -> Self {
        Self {
            f1: DEFAULT_F1_LEVELS.to_vec(),
            f2: DEFAULT_F2_LEVELS.to_vec(),
            f3: DEFAULT_F3_LEVELS.to_vec(),
        }
    }
}

impl FactorLevels {
    /// Cells in `(f1, f2, f3)` lexicographic order of the level lists.
    pub fn cells(&self) -> Result<Vec<PrimaryFactors>> {
        if self.f1.is_empty() || self.f2.is_empty() || self.f3.is_empty() {
            return Err(Error::invalid("levels", "every factor needs at least one level"));
        }
        let mut out = Vec::with_capacity(self.f1.len() * self.f2.len() * self.f3.len());
        for &f1 in &self.f1 {
            for &f2 in &self.f2 {
                for &f3 in &self.f3 {
                    out.push(PrimaryFactors::new(f1, f2, f3)?);
                }
            }
        }
        Ok(out)
    }
}

/// Both tests' power curves under one pairwise truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub factors: PrimaryFactors,
    pub eta: Vec<f64>,
    pub dim_fit: PowerTable,
    pub pim_fit: PowerTable,
}

/// Shared inputs of a factor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dist: CovariateDistribution,
    pub null: NullParams,
    pub alpha: f64,
    pub delta_grid: Vec<f64>,
}

/// One cell of the sweep from precomputed moments.
pub fn grid_cell(moments: &ScenarioMoments, spec: &SweepSpec, factors: PrimaryFactors) -> Result<GridCell> {
    let scenario = PowerScenario::pim_truth(
        spec.dist.clone(),
        spec.null.clone(),
        &factors,
        spec.alpha,
        spec.delta_grid.clone(),
    )?;
    Ok(GridCell {
        factors,
        dim_fit: power_curve_with(moments, &scenario, Family::Dim)?,
        pim_fit: power_curve_with(moments, &scenario, Family::Pim)?,
        eta: scenario.eta,
    })
}

/// DIM- and PIM-fit power curves for every combination of factor levels
/// under a pairwise truth.
pub fn factor_grid_sweep(spec: &SweepSpec, levels: &FactorLevels) -> Result<Vec<GridCell>> {
    let cells = levels.cells()?;
    let moments = ScenarioMoments::compute(&spec.null, &spec.dist)?;
    cells
        .into_iter()
        .map(|f| grid_cell(&moments, spec, f))
        .collect()
}
