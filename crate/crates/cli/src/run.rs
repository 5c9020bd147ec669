//! Executes a parsed configuration and renders its CSV table.
//!
//! Parallel work is split into a fixed number of chunks whose results are
//! combined in chunk order, so the output does not depend on the thread
//! count.

use crate::config::{ConfigError, Mode, RunConfig};
use crate::plot::plot_script;
use ipower_core::expectation::{accumulate_null_gradients, assemble_score_moment, enumerate_support, MomentAccumulator};
use ipower_core::mcvalidate::{RejectionRate, RejectionTally, ReplicatePlan};
use ipower_core::scenarios::{grid_cell, power_curve_with, PowerScenario, PowerTable, ScenarioMoments, SweepSpec};
use ipower_core::{CovariateDistribution, Error, Family, NullParams};
use rayon::prelude::*;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Support points are split into this many chunks for moment sums.
const MOMENT_CHUNKS: usize = 64;
/// Replicates per parallel task in MC mode.
const REPLICATE_CHUNK: u64 = 50;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl RunError {
    /// 2 for numerical failures (singular matrices, non-convergence), 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Model(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// Null-point moments for the DIM and PIM fits, summed in parallel over the
/// enumerated support. Continuous laws fall back to the sequential Monte
/// Carlo path.
pub fn scenario_moments(null: &NullParams, dist: &CovariateDistribution) -> Result<ScenarioMoments, Error> {
    if matches!(dist, CovariateDistribution::Sampleable { .. }) {
        return ScenarioMoments::compute(null, dist);
    }
    let support = enumerate_support(dist)?;
    let len = support.len();
    let chunk = len.div_ceil(MOMENT_CHUNKS).max(1);
    let ranges: Vec<_> = (0..len).step_by(chunk).map(|s| s..(s + chunk).min(len)).collect();
    let pairs = [(Family::Dim, Family::Dim), (Family::Pim, Family::Pim), (Family::Dim, Family::Pim)];
    let parts: Vec<[MomentAccumulator; 3]> = ranges
        .into_par_iter()
        .map(|range| -> Result<[MomentAccumulator; 3], Error> {
            let [a, b, c] = pairs.map(|(f, g)| accumulate_null_gradients(f, g, null, &support, range.clone()));
            Ok([a?, b?, c?])
        })
        .collect::<Result<_, _>>()?;
    let mut parts = parts.into_iter();
    let mut total = parts.next().ok_or_else(|| Error::Degenerate("empty support".into()))?;
    for part in parts {
        for (t, p) in total.iter_mut().zip(&part) {
            t.merge(p);
        }
    }
    let s2 = null.sigma2();
    Ok(ScenarioMoments {
        p: null.p(),
        info_dim: assemble_score_moment(&total[0].block(1.0), s2),
        info_pim: assemble_score_moment(&total[1].block(1.0), s2),
        cross_dim_pim: assemble_score_moment(&total[2].block(1.0), s2),
    })
}

fn scenario(config: &RunConfig) -> Result<PowerScenario, Error> {
    match config.truth {
        Family::Pim => {
            let factors = config
                .primary_factors()
                .ok_or_else(|| Error::Domain("a pairwise truth needs factor levels".into()))?;
            PowerScenario::pim_truth(
                config.dist.clone(),
                config.null.clone(),
                &factors,
                config.alpha,
                config.delta_grid.clone(),
            )
        }
        _ => PowerScenario::dim_truth(config.dist.clone(), config.null.clone(), config.alpha, config.delta_grid.clone()),
    }
}

/// Formats a real with 17 significant digits, enough to round-trip.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| RunError::Io {
            context: "formatting CSV".into(),
            source: io::Error::other(e),
        };
        w.write_record(self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.into_inner().map_err(|e| RunError::Io {
            context: "formatting CSV".into(),
            source: io::Error::other(e.to_string()),
        })
    }
}

fn curve_table(config: &RunConfig) -> Result<Table, Error> {
    let scenario = scenario(config)?;
    let moments = scenario_moments(&config.null, &config.dist)?;
    let table = |fit: Family| -> Result<Option<PowerTable>, Error> {
        config
            .fit
            .includes(fit)
            .then(|| power_curve_with(&moments, &scenario, fit))
            .transpose()
    };
    let (dim, pim) = (table(Family::Dim)?, table(Family::Pim)?);
    let cell = |t: &Option<PowerTable>, i: usize| t.as_ref().map_or(String::new(), |t| real(t.rows[i].power));
    Ok(Table {
        header: &["delta", "power_dim_fit", "power_pim_fit"],
        rows: (0..config.delta_grid.len())
            .map(|i| vec![real(config.delta_grid[i]), cell(&dim, i), cell(&pim, i)])
            .collect(),
    })
}

fn grid_table(config: &RunConfig) -> Result<Table, Error> {
    let spec = SweepSpec {
        dist: config.dist.clone(),
        null: config.null.clone(),
        alpha: config.alpha,
        delta_grid: config.delta_grid.clone(),
    };
    let moments = scenario_moments(&config.null, &config.dist)?;
    let cells = config
        .factors
        .cells()?
        .into_par_iter()
        .map(|f| grid_cell(&moments, &spec, f))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for cell in &cells {
        let f = cell.factors;
        for (i, &delta) in config.delta_grid.iter().enumerate() {
            for (family, table) in [(Family::Dim, &cell.dim_fit), (Family::Pim, &cell.pim_fit)] {
                if config.fit.includes(family) {
                    rows.push(vec![
                        real(f.f1),
                        real(f.f2),
                        real(f.f3),
                        real(delta),
                        family.name().to_string(),
                        real(table.rows[i].power),
                    ]);
                }
            }
        }
    }
    Ok(Table {
        header: &["f1", "f2", "f3", "delta", "fit", "power"],
        rows,
    })
}

/// Rejection rate of one (fit, Δ) cell with replicates run in parallel.
pub fn parallel_rejection_rate(
    scenario: &PowerScenario,
    fit: Family,
    delta: f64,
    n: usize,
    reps: u64,
    seed: u64,
) -> Result<RejectionRate, Error> {
    if reps < 100 {
        return Err(Error::InvalidParameter {
            name: "reps",
            reason: format!("must be >= 100, got {reps}"),
        });
    }
    let plan = ReplicatePlan::new(scenario, fit, delta, n, seed)?;
    let chunks: Vec<_> = (0..reps)
        .step_by(REPLICATE_CHUNK as usize)
        .map(|s| s..(s + REPLICATE_CHUNK).min(reps))
        .collect();
    let tallies = chunks
        .into_par_iter()
        .map(|r| plan.run_range(r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = RejectionTally::default();
    for t in &tallies {
        total.merge(t);
    }
    total.summarize()
}

fn mc_table(config: &RunConfig) -> Result<Table, Error> {
    let mc = config
        .mc
        .as_ref()
        .ok_or_else(|| Error::Domain("mc mode needs n and reps".into()))?;
    let scenario = scenario(config)?;
    let mut rows = Vec::new();
    for &delta in &config.delta_grid {
        for &fit in config.fit.families() {
            let r = parallel_rejection_rate(&scenario, fit, delta, mc.n, mc.reps, mc.seed)
                .map_err(|e| e.context(format!("{fit} fit at Delta = {delta}")))?;
            rows.push(vec![
                real(delta),
                fit.name().to_string(),
                mc.n.to_string(),
                mc.reps.to_string(),
                real(r.rate),
                real(r.se),
                r.nonconverged.to_string(),
            ]);
        }
    }
    Ok(Table {
        header: &["delta", "fit", "n", "reps", "rate", "se", "nonconverged"],
        rows,
    })
}

/// Computes the configured table as CSV bytes.
pub fn render(config: &RunConfig) -> Result<Vec<u8>, RunError> {
    let table = match config.mode {
        Mode::Curve => curve_table(config)?,
        Mode::Grid => grid_table(config)?,
        Mode::Mc => mc_table(config)?,
    };
    table.render()
}

/// Command-line overrides of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub plot_script: Option<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|source| RunError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

/// Runs `config` and writes the CSV (to stdout when no path is set) and the
/// optional plotting script.
pub fn run(mut config: RunConfig, opts: &RunOptions) -> Result<(), RunError> {
    if let Some(seed) = opts.seed {
        match config.mc.as_mut() {
            Some(mc) => mc.seed = seed,
            None => {
                return Err(ConfigError {
                    line: None,
                    key: Some("seed".into()),
                    message: "--seed only applies in mc mode".into(),
                }
                .into())
            }
        }
    }
    let out = opts.out.clone().or_else(|| config.out.clone());
    let script = opts.plot_script.clone().or_else(|| config.plot_script.clone());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| RunError::Threads(e.to_string()))?;
    let csv = pool.install(|| render(&config))?;
    match &out {
        Some(path) => write_file(path, &csv)?,
        None => io::stdout().lock().write_all(&csv).map_err(|source| RunError::Io {
            context: "writing to stdout".into(),
            source,
        })?,
    }
    if let Some(path) = script {
        let text = plot_script(config.mode, out.as_deref());
        write_file(&path, text.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn parallel_moments_match_sequential() {
        let null = NullParams::new(0.1, vec![0.5, 0.2, 0.9, 0.4, 0.6, 0.3, 0.7], 1.3).unwrap();
        let dist = CovariateDistribution::product_bernoulli(vec![0.5, 0.3, 0.6, 0.5, 0.2, 0.8, 0.5]).unwrap();
        let a = scenario_moments(&null, &dist).unwrap();
        let b = ScenarioMoments::compute(&null, &dist).unwrap();
        for (x, y) in [(&a.info_dim, &b.info_dim), (&a.info_pim, &b.info_pim), (&a.cross_dim_pim, &b.cross_dim_pim)] {
            assert!((x - y).amax() < 1e-14);
        }
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let c = parse_config("mode=grid\np=5\ntruth=pim\nf1=0.5\nf2=0.2,0.8\nf3=1\n").unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        assert_eq!(one.install(|| render(&c)).unwrap(), three.install(|| render(&c)).unwrap());
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, 0.05 - 1e-17, 6.02214076e23, -2.5e-300] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(real(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn curve_with_single_fit_leaves_other_column_empty() {
        let c = parse_config("mode=curve\np=3\nfit=dim\ndelta=-1,0,1\n").unwrap();
        let text = String::from_utf8(render(&c).unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "delta,power_dim_fit,power_pim_fit");
        assert!(lines[2].starts_with("0.0000000000000000e0,5.00000000000000") && lines[2].ends_with(','));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Model(Error::Singular { condition: 1e20 }).exit_code(), 2);
        assert_eq!(RunError::Model(Error::Domain("x".into())).exit_code(), 1);
        let cfg = ConfigError {
            line: Some(1),
            key: None,
            message: String::new(),
        };
        assert_eq!(RunError::Config(cfg).exit_code(), 1);
    }
}
