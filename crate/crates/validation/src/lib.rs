//! End-to-end acceptance checks. Each check returns whether it passed with a
//! one-line summary of what it measured.

use ipower::run::{parallel_rejection_rate, scenario_moments};
use ipower_core::asymptotics::{
    chisq_quantile, kl_projection, kl_projection_derivative, noncentral_chisq_sf, noncentrality,
    reduced_noncentrality, required_noncentrality, ConstraintSpec, Direction,
};
use ipower_core::models::score_at_null;
use ipower_core::scenarios::{
    default_delta_grid, grid_cell, power_curve_with, unit_noncentrality, FactorLevels, GridCell, NoncentralityPath,
    PowerScenario, PowerTable, PrimaryFactors, ScenarioMoments, SweepSpec,
};
use ipower_core::{CovariateDistribution, Family, ModelParams, NullParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::{Duration, Instant};

/// Master seed shared by the simulation-based checks.
pub const SEED: u64 = 20261016;

const PAIRS: [(Family, Family); 4] = [
    (Family::Dim, Family::Dim),
    (Family::Dim, Family::Pim),
    (Family::Pim, Family::Dim),
    (Family::Pim, Family::Pim),
];

#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub summary: String,
    pub elapsed: Duration,
}

/// A named check.
pub type NamedCheck = (&'static str, fn() -> Check);

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn timed(f: impl FnOnce() -> Outcome) -> Check {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    match outcome {
        Ok((passed, summary)) => Check {
            passed,
            summary,
            elapsed,
        },
        Err(e) => Check {
            passed: false,
            summary: format!("error: {e}"),
            elapsed,
        },
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// `p` iid Bernoulli(1/2) covariates with β0 = 0, every β = 1/2 and the
/// given error variance.
pub fn binary_design(p: usize, sigma2: f64) -> (CovariateDistribution, NullParams) {
    (
        CovariateDistribution::iid_bernoulli(p, 0.5).expect("valid"),
        NullParams::new(0.0, vec![0.5; p], sigma2).expect("valid"),
    )
}

fn strictly_dominates(a: &PowerTable, b: &PowerTable) -> bool {
    a.rows
        .iter()
        .zip(&b.rows)
        .all(|(x, y)| if x.delta == 0.0 { x.power >= y.power - 1e-12 } else { x.power > y.power })
}

/// Under a DIM truth with nine binary covariates the DIM-based test has
/// strictly higher power than the PIM-based test at every Δ ≠ 0.
pub fn dim_test_dominates_under_dim_truth() -> Check {
    timed(|| {
        let start = Instant::now();
        let (dist, null) = binary_design(9, 1.0);
        let scenario = PowerScenario::dim_truth(dist, null, 0.05, default_delta_grid())?;
        let moments = scenario_moments(&scenario.null, &scenario.dist)?;
        let dim = power_curve_with(&moments, &scenario, Family::Dim)?;
        let pim = power_curve_with(&moments, &scenario, Family::Pim)?;
        let ok = strictly_dominates(&dim, &pim);
        let last = dim.rows.len() - 1;
        Ok((
            ok && within(start.elapsed(), 30),
            format!(
                "{} grid points; at Delta = {}: DIM {:.4} vs PIM {:.4}; unit noncentrality {:.5} vs {:.5}",
                dim.rows.len(),
                dim.rows[last].delta,
                dim.rows[last].power,
                pim.rows[last].power,
                dim.unit_noncentrality,
                pim.unit_noncentrality
            ),
        ))
    })
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// For a correctly specified fit the general noncentrality (projection
/// derivative equal to the identity) equals the reduced formula.
pub fn correct_model_reduction() -> Check {
    timed(|| {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let d = rng.random_range(2..=15);
            let r = rng.random_range(1..=d);
            let info = random_spd(&mut rng, d);
            let c = DMatrix::from_fn(r, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cs = ConstraintSpec::new(c, DVector::zeros(r))?;
            let raw = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dir = Direction::new(&raw / raw.norm(), rng.random_range(-5.0..5.0))?;
            let derivative = kl_projection_derivative(&info, &info)?;
            let general = noncentrality(&dir, &cs, &info, &derivative)?;
            let reduced = reduced_noncentrality(&dir, &cs, &info)?;
            worst = worst.max((general - reduced).abs() / reduced.abs().max(1.0));
        }
        let (dist, null) = binary_design(9, 1.0);
        let moments = ScenarioMoments::compute(&null, &dist)?;
        let pim_eta = ipower_core::scenarios::build_eta_from_factors(9, &PrimaryFactors::new(0.5, 0.2, 0.5)?)?;
        let mut scenario_worst: f64 = 0.0;
        for (family, eta) in [(Family::Dim, vec![1.0]), (Family::Pim, pim_eta)] {
            let g = unit_noncentrality(&moments, family, family, &eta, NoncentralityPath::General)?;
            let r = unit_noncentrality(&moments, family, family, &eta, NoncentralityPath::Reduced)?;
            scenario_worst = scenario_worst.max((g - r).abs() / r.abs().max(1.0));
        }
        let ok = worst <= 1e-8 && scenario_worst <= 1e-8 && within(start.elapsed(), 10);
        Ok((
            ok,
            format!("max relative gap {worst:.2e} over 100 random instances, {scenario_worst:.2e} on the two designs"),
        ))
    })
}

/// Power is even in Δ, and the noncentrality depends on (Δ, σ) only through
/// Δ²/σ².
pub fn even_and_scale_free() -> Check {
    timed(|| {
        let grid = default_delta_grid();
        let factors = PrimaryFactors::new(0.8, 0.2, 0.5)?;
        let build = |sigma2: f64, grid: Vec<f64>| -> Result<[PowerScenario; 2], Box<dyn std::error::Error>> {
            let (dist, null) = binary_design(9, sigma2);
            Ok([
                PowerScenario::dim_truth(dist.clone(), null.clone(), 0.05, grid.clone())?,
                PowerScenario::pim_truth(dist, null, &factors, 0.05, grid)?,
            ])
        };
        let base = build(1.0, grid.clone())?;
        let base_moments = scenario_moments(&base[0].null, &base[0].dist)?;
        let mut odd: f64 = 0.0;
        let mut base_tables = Vec::new();
        for s in &base {
            for fit in [Family::Dim, Family::Pim] {
                let t = power_curve_with(&base_moments, s, fit)?;
                let n = t.rows.len();
                for i in 0..n {
                    odd = odd.max((t.rows[i].power - t.rows[n - 1 - i].power).abs());
                }
                base_tables.push(t);
            }
        }
        let mut scale: f64 = 0.0;
        for t in [0.5, 2.0, 10.0] {
            let scaled = build(t * t, grid.iter().map(|d| d * t).collect())?;
            let moments = scenario_moments(&scaled[0].null, &scaled[0].dist)?;
            let mut k = 0;
            for s in &scaled {
                for fit in [Family::Dim, Family::Pim] {
                    let table = power_curve_with(&moments, s, fit)?;
                    for (a, b) in table.rows.iter().zip(&base_tables[k].rows) {
                        if b.noncentrality > 0.0 {
                            scale = scale.max((a.noncentrality - b.noncentrality).abs() / b.noncentrality);
                        }
                    }
                    k += 1;
                }
            }
        }
        Ok((
            odd <= 1e-10 && scale <= 1e-10,
            format!("max |power(D) - power(-D)| = {odd:.2e}; max relative change of delta under (tD, t sigma) = {scale:.2e}"),
        ))
    })
}

fn max_table_gap(a: &GridCell, b: &GridCell) -> f64 {
    [(&a.dim_fit, &b.dim_fit), (&a.pim_fit, &b.pim_fit)]
        .iter()
        .flat_map(|(x, y)| x.rows.iter().zip(&y.rows).map(|(u, v)| (u.power - v.power).abs()))
        .fold(0.0, f64::max)
}

fn nine_covariate_cell(f1: f64, f2: f64, f3: f64) -> Result<GridCell, Box<dyn std::error::Error>> {
    let (dist, null) = binary_design(9, 1.0);
    let moments = scenario_moments(&null, &dist)?;
    let spec = SweepSpec {
        dist,
        null,
        alpha: 0.05,
        delta_grid: default_delta_grid(),
    };
    Ok(grid_cell(&moments, &spec, PrimaryFactors::new(f1, f2, f3)?)?)
}

/// Cells (f1, f2) = (0.2, 0.8) and (0.8, 0.2) at f3 = 1 give identical power
/// tables.
pub fn swapped_sparsity_and_sign_cells_match() -> Check {
    timed(|| {
        let a = nine_covariate_cell(0.2, 0.8, 1.0)?;
        let b = nine_covariate_cell(0.8, 0.2, 1.0)?;
        let gap = max_table_gap(&a, &b);
        let nonzero = |c: &GridCell| c.eta.iter().filter(|v| **v != 0.0).count();
        Ok((
            gap <= 1e-9,
            format!(
                "max power gap {gap:.3e}; nonzero pairs {} vs {}; DIM unit noncentrality {:.5} vs {:.5}",
                nonzero(&a),
                nonzero(&b),
                a.dim_fit.unit_noncentrality,
                b.dim_fit.unit_noncentrality
            ),
        ))
    })
}

/// Mirror-image columns: flipping the sign proportion (f2 to 1 − f2) at
/// f3 = 1 leaves every power table unchanged.
pub fn sign_mirrored_columns_match() -> Check {
    timed(|| {
        let mut gap: f64 = 0.0;
        for f1 in [0.2, 0.5, 0.8] {
            let a = nine_covariate_cell(f1, 0.2, 1.0)?;
            let b = nine_covariate_cell(f1, 0.8, 1.0)?;
            gap = gap.max(max_table_gap(&a, &b));
        }
        Ok((gap <= 1e-9, format!("max power gap {gap:.3e} over f1 in (0.2, 0.5, 0.8)")))
    })
}

struct OuterSums {
    sum: DMatrix<f64>,
    sum_sq: DMatrix<f64>,
}

/// Closed-form score moments against simulated score outer-product averages.
pub fn moments_match_simulation() -> Check {
    timed(|| {
        let start = Instant::now();
        let draws = 100_000usize;
        let (mut compared, mut exceed, mut worst_z) = (0usize, 0usize, 0.0f64);
        let mut per_design = Vec::new();
        for p in [3usize, 9] {
            let (dist, null) = binary_design(p, 1.0);
            let moments = ScenarioMoments::compute(&null, &dist)?;
            let dims = [Family::Dim, Family::Pim].map(|f| null.embed(f).to_flat().len());
            let mut acc: Vec<OuterSums> = PAIRS
                .iter()
                .map(|(f, g)| {
                    let (r, c) = (dims[(*f == Family::Pim) as usize], dims[(*g == Family::Pim) as usize]);
                    OuterSums {
                        sum: DMatrix::zeros(r, c),
                        sum_sq: DMatrix::zeros(r, c),
                    }
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ p as u64);
            let sigma = null.sigma2().sqrt();
            let mut x = vec![0.0; p];
            for _ in 0..draws {
                dist.sample_into(&mut rng, &mut x);
                let y = null.additive_mean(&x)? + sigma * rng.sample::<f64, _>(StandardNormal);
                let scores = [
                    score_at_null(Family::Dim, &null, &x, y)?,
                    score_at_null(Family::Pim, &null, &x, y)?,
                ];
                for ((f, g), m) in PAIRS.iter().zip(acc.iter_mut()) {
                    let sf = &scores[(*f == Family::Pim) as usize];
                    let sg = &scores[(*g == Family::Pim) as usize];
                    for (i, a) in sf.iter().enumerate() {
                        for (j, b) in sg.iter().enumerate() {
                            let v = a * b;
                            m.sum[(i, j)] += v;
                            m.sum_sq[(i, j)] += v * v;
                        }
                    }
                }
            }
            let mut design_exceed = 0;
            for ((f, g), m) in PAIRS.iter().zip(&acc) {
                let closed = moments.cross(*f, *g)?;
                for i in 0..closed.nrows() {
                    for j in 0..closed.ncols() {
                        let mean = m.sum[(i, j)] / draws as f64;
                        let var = (m.sum_sq[(i, j)] / draws as f64 - mean * mean).max(0.0);
                        let se = (var / draws as f64).sqrt();
                        let diff = (mean - closed[(i, j)]).abs();
                        compared += 1;
                        if se == 0.0 {
                            if diff > 1e-12 * (1.0 + closed[(i, j)].abs()) {
                                exceed += 1;
                                design_exceed += 1;
                            }
                            continue;
                        }
                        let z = diff / se;
                        worst_z = worst_z.max(z);
                        if z > 3.0 {
                            exceed += 1;
                            design_exceed += 1;
                        }
                    }
                }
            }
            per_design.push(format!("p={p}: {design_exceed}"));
        }
        Ok((
            exceed == 0 && within(start.elapsed(), 60),
            format!(
                "{compared} entries, {exceed} beyond 3 SE ({}), max |z| {worst_z:.2}; about {:.1} expected by chance",
                per_design.join(", "),
                0.0027 * compared as f64
            ),
        ))
    })
}

/// The projection derivative against finite differences of re-minimized
/// KL projections at three covariates.
pub fn projection_derivative_matches_reminimization() -> Check {
    timed(|| {
        let (dist, null) = binary_design(3, 1.0);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for (fit, truth) in PAIRS {
            let info = ipower_core::expectation::fisher_information(fit, &null, &dist)?;
            let cross = ipower_core::expectation::cross_moment(fit, truth, &null, &dist)?;
            let analytic = kl_projection_derivative(&info, &cross)?;
            let start = null.embed(fit).to_flat();
            let init = &start[..start.len() - 1];
            let base = null.embed(truth).to_flat();
            let scale = analytic.amax();
            for j in 0..base.len() {
                let project = |step: f64| -> Result<Vec<f64>, ipower_core::Error> {
                    let mut w = base.clone();
                    w[j] += step;
                    let truth_params = ModelParams::from_flat(truth, 3, &w)?;
                    Ok(kl_projection(fit, &truth_params, &dist, Some(init))?.to_flat())
                };
                let (up, down) = (project(h)?, project(-h)?);
                for i in 0..analytic.nrows() {
                    let fd = (up[i] - down[i]) / (2.0 * h);
                    let a = analytic[(i, j)];
                    worst = worst.max((fd - a).abs() / a.abs().max(1e-6 * scale));
                }
            }
        }
        Ok((worst <= 1e-2, format!("max relative entry error {worst:.2e} over all four fit/truth pairs")))
    })
}

/// Simulated Wald rejection rates against asymptotic power.
pub fn finite_sample_rates_match_asymptotics() -> Check {
    timed(|| {
        let start = Instant::now();
        let (n, reps) = (5000usize, 2000u64);
        let deltas = vec![0.0, 1.0, 2.0];
        let (dist, null) = binary_design(3, 1.0);
        let scenarios = [
            PowerScenario::dim_truth(dist.clone(), null.clone(), 0.05, deltas.clone())?,
            PowerScenario::pim_truth(dist, null, &PrimaryFactors::new(1.0, 1.0, 1.0)?, 0.05, deltas.clone())?,
        ];
        let mut cells = Vec::new();
        let mut ok = true;
        for s in &scenarios {
            let moments = scenario_moments(&s.null, &s.dist)?;
            for fit in [Family::Dim, Family::Pim] {
                let table = power_curve_with(&moments, s, fit)?;
                for (i, &delta) in deltas.iter().enumerate() {
                    let r = parallel_rejection_rate(s, fit, delta, n, reps, SEED)?;
                    let predicted = table.rows[i].power;
                    let z = (r.rate - predicted) / r.se;
                    let good = z.abs() <= 3.0 && (r.nonconverged as f64) < 0.01 * reps as f64;
                    ok &= good;
                    cells.push(format!(
                        "{}/{} D={delta}: {:.4} vs {:.4} (z {z:+.2}, nc {}){}",
                        fit.name(),
                        s.truth.name(),
                        r.rate,
                        predicted,
                        r.nonconverged,
                        if good { "" } else { " <- outside" }
                    ));
                }
            }
        }
        Ok((ok && within(start.elapsed(), 600), cells.join("; ")))
    })
}

// upper normal tail through erfc(z) = Q(1/2, z²) for z ≥ 0
fn upper_normal(z: f64) -> f64 {
    let q = ipower_core::special::gamma_q(0.5, z * z / 2.0).expect("finite argument");
    if z >= 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

/// The one-degree-of-freedom noncentral tail equals a sum of two normal
/// tails, and central quantiles invert the tail.
pub fn noncentral_unit_checks() -> Check {
    timed(|| {
        let mut worst_identity: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let x = 0.02 + 1.6 * i as f64;
                let delta = 0.25 * (j * j) as f64;
                let (rx, rd) = (x.sqrt(), delta.sqrt());
                let oracle = upper_normal(rx - rd) + upper_normal(rx + rd);
                worst_identity = worst_identity.max((noncentral_chisq_sf(x, 1, delta)? - oracle).abs());
            }
        }
        let mut worst_round_trip: f64 = 0.0;
        for r in [1usize, 2, 3, 5, 10, 36, 100, 153] {
            for alpha in [0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
                let q = chisq_quantile(r, alpha)?;
                worst_round_trip = worst_round_trip.max((noncentral_chisq_sf(q, r, 0.0)? - alpha).abs());
            }
        }
        Ok((
            worst_identity <= 1e-8 && worst_round_trip <= 1e-8,
            format!("normal identity max error {worst_identity:.2e} on 100 points; quantile round trip {worst_round_trip:.2e}"),
        ))
    })
}

struct CellComparison {
    dim_wins: bool,
    mean_gap: f64,
    efficiency: f64,
}

fn compare_cell(cell: &GridCell, pim_dof: usize) -> Result<CellComparison, ipower_core::Error> {
    let rows = cell.dim_fit.rows.len() as f64;
    let mean_gap = cell
        .dim_fit
        .rows
        .iter()
        .zip(&cell.pim_fit.rows)
        .map(|(a, b)| a.power - b.power)
        .sum::<f64>()
        / rows;
    // Δ² each test needs for power one half, PIM over DIM
    let need_dim = required_noncentrality(1, 0.05, 0.5)? / cell.dim_fit.unit_noncentrality;
    let need_pim = required_noncentrality(pim_dof, 0.05, 0.5)? / cell.pim_fit.unit_noncentrality;
    Ok(CellComparison {
        dim_wins: strictly_dominates(&cell.dim_fit, &cell.pim_fit),
        mean_gap,
        efficiency: need_pim / need_dim,
    })
}

fn sweep(p: usize) -> Result<Vec<GridCell>, Box<dyn std::error::Error>> {
    let (dist, null) = binary_design(p, 1.0);
    let moments = scenario_moments(&null, &dist)?;
    let spec = SweepSpec {
        dist,
        null,
        alpha: 0.05,
        delta_grid: default_delta_grid(),
    };
    Ok(FactorLevels::default()
        .cells()?
        .into_iter()
        .map(|f| grid_cell(&moments, &spec, f))
        .collect::<Result<Vec<_>, _>>()?)
}

/// The eighteen-covariate sweep runs in time, and in every corner cell where
/// the DIM test won with nine covariates its advantage grows.
pub fn larger_design_favours_dim_test() -> Check {
    timed(|| {
        let small = sweep(9)?;
        let start = Instant::now();
        let large = sweep(18)?;
        let large_time = start.elapsed();
        let corner = |c: &GridCell| [0.2, 0.8].contains(&c.factors.f1) && [0.2, 0.8].contains(&c.factors.f2);
        let mut checked = Vec::new();
        let mut ok = true;
        let (mut wins_small, mut wins_large) = (0, 0);
        for (a, b) in small.iter().zip(&large) {
            let (ca, cb) = (compare_cell(a, 36)?, compare_cell(b, 153)?);
            wins_small += ca.dim_wins as usize;
            wins_large += cb.dim_wins as usize;
            if corner(a) && ca.dim_wins {
                let better = cb.dim_wins && cb.mean_gap > ca.mean_gap && cb.efficiency > ca.efficiency;
                ok &= better;
                checked.push(format!(
                    "({}, {}, {}): gap {:.3} -> {:.3}, efficiency {:.2} -> {:.2}",
                    a.factors.f1, a.factors.f2, a.factors.f3, ca.mean_gap, cb.mean_gap, ca.efficiency, cb.efficiency
                ));
            }
        }
        ok &= !checked.is_empty() && large.len() == 27 && within(large_time, 900);
        Ok((
            ok,
            format!(
                "sweep {:.1} s; DIM wins outright in {wins_small} -> {wins_large} cells; corners {}",
                large_time.as_secs_f64(),
                checked.join("; ")
            ),
        ))
    })
}

/// All checks in order, with short names.
pub fn all_checks() -> Vec<NamedCheck> {
    vec![
        ("DIM test dominates under DIM truth", dim_test_dominates_under_dim_truth),
        ("correct-model reduction", correct_model_reduction),
        ("evenness and delta scaling", even_and_scale_free),
        ("swapped (f1, f2) cells identical", swapped_sparsity_and_sign_cells_match),
        ("score moments match simulation", moments_match_simulation),
        ("projection derivative matches re-minimization", projection_derivative_matches_reminimization),
        ("finite-sample rejection rates", finite_sample_rates_match_asymptotics),
        ("noncentral chi-square unit checks", noncentral_unit_checks),
        ("eighteen-covariate sweep", larger_design_favours_dim_test),
    ]
}

/// Checks that support the criteria but are not part of them.
pub fn supplementary_checks() -> Vec<NamedCheck> {
    vec![("sign-mirrored columns identical", sign_mirrored_columns_match)]
}
