//! `key = value` run configuration.
//!
//! Lists are comma separated. Every value is checked here, so a config that
//! parses describes a runnable scenario.

use ipower_core::expectation::{Generator, MAX_ENUMERATED_COVARIATES};
use ipower_core::scenarios::{
    build_eta_from_factors, default_delta_grid, linear_grid, FactorLevels, PrimaryFactors, DEFAULT_ALPHA,
};
use ipower_core::{CovariateDistribution, Family, NullParams};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// Covariate draws used for moments when the law is continuous.
pub const DEFAULT_MOMENT_SAMPLES: usize = 100_000;

const KEYS: &[&str] = &[
    "mode",
    "p",
    "covariates",
    "q",
    "lo",
    "hi",
    "moment_samples",
    "moment_seed",
    "beta0",
    "beta",
    "sigma2",
    "alpha",
    "truth",
    "fit",
    "f1",
    "f2",
    "f3",
    "delta_min",
    "delta_max",
    "delta_steps",
    "delta",
    "n",
    "reps",
    "seed",
    "out",
    "plot_script",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn missing(key: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Curve,
    Grid,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitSelection {
    Dim,
    Pim,
    Both,
}

impl FitSelection {
    pub fn families(self) -> &'static [Family] {
        match self {
            FitSelection::Dim => &[Family::Dim],
            FitSelection::Pim => &[Family::Pim],
            FitSelection::Both => &[Family::Dim, Family::Pim],
        }
    }

    pub fn includes(self, family: Family) -> bool {
        self.families().contains(&family)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub dist: CovariateDistribution,
    pub null: NullParams,
    pub alpha: f64,
    pub truth: Family,
    pub fit: FitSelection,
    /// One level per factor except in grid mode; unused under a DIM truth.
    pub factors: FactorLevels,
    pub delta_grid: Vec<f64>,
    pub mc: Option<McSettings>,
    pub out: Option<PathBuf>,
    pub plot_script: Option<PathBuf>,
}

impl RunConfig {
    pub fn p(&self) -> usize {
        self.null.p()
    }

    /// The single factor triple of a curve or MC run.
    pub fn primary_factors(&self) -> Option<PrimaryFactors> {
        self.factors.cells().ok()?.first().copied()
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.get(key).map(|e| e.line)
    }

    fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        match self.line(key) {
            Some(line) => ConfigError::at(line, key, message),
            None => ConfigError::missing(key, message),
        }
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::at(e.line, key, format!("expected {what}, got `{}`", e.value))),
        }
    }

    fn parse_or<T: FromStr>(&self, key: &str, what: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.parse(key, what)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str, what: &str, context: &str) -> Result<T, ConfigError> {
        self.parse(key, what)?
            .ok_or_else(|| ConfigError::missing(key, format!("required {context}")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::at(e.line, key, format!("expected a finite number, got `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(_) => Err(self.error(key, "expected a single number")),
        }
    }

    fn word(&self, key: &str) -> Option<(usize, &str)> {
        self.get(key).map(|e| (e.line, e.value.as_str()))
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::at(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, key, "missing value"));
        }
        if let Some(first) = map.get(key) {
            return Err(ConfigError::at(
                line,
                key,
                format!("duplicate key (first set on line {})", first.line),
            ));
        }
        map.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(Entries(map))
}

fn family(entries: &Entries, key: &str, default: Family) -> Result<Family, ConfigError> {
    match entries.word(key) {
        None => Ok(default),
        Some((_, "dim")) => Ok(Family::Dim),
        Some((_, "pim")) => Ok(Family::Pim),
        Some((line, other)) => Err(ConfigError::at(line, key, format!("expected dim or pim, got `{other}`"))),
    }
}

fn unsigned<T: FromStr>(entries: &Entries, key: &str) -> Result<Option<T>, ConfigError> {
    entries.parse(key, "a nonnegative integer")
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;

    let mode = match e.word("mode") {
        None => return Err(ConfigError::missing("mode", "required (curve, grid or mc)")),
        Some((_, "curve")) => Mode::Curve,
        Some((_, "grid")) => Mode::Grid,
        Some((_, "mc")) => Mode::Mc,
        Some((line, other)) => {
            return Err(ConfigError::at(line, "mode", format!("expected curve, grid or mc, got `{other}`")))
        }
    };

    let p: usize = unsigned(&e, "p")?.ok_or_else(|| ConfigError::missing("p", "required"))?;
    if p < 2 {
        return Err(e.error("p", format!("needs at least 2 covariates for pairwise terms, got {p}")));
    }

    let beta0 = e.real("beta0")?.unwrap_or(0.0);
    let beta = match e.list("beta")? {
        None => vec![0.5; p],
        Some(v) if v.len() == 1 => vec![v[0]; p],
        Some(v) if v.len() == p => v,
        Some(v) => return Err(e.error("beta", format!("expected 1 or p = {p} values, got {}", v.len()))),
    };
    let sigma2 = e.real("sigma2")?.unwrap_or(1.0);
    if !(sigma2 > 0.0) {
        return Err(e.error("sigma2", format!("must be > 0, got {sigma2}")));
    }
    if let Some(b) = beta.iter().find(|b| **b < 0.0) {
        return Err(e.error("beta", format!("main effects must be >= 0, got {b}")));
    }
    let null = NullParams::new(beta0, beta, sigma2).map_err(|err| e.error("beta", err.to_string()))?;

    let alpha = e.real("alpha")?.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(e.error("alpha", format!("must lie in (0, 1), got {alpha}")));
    }

    let truth = family(&e, "truth", Family::Dim)?;
    let fit = match e.word("fit") {
        None | Some((_, "both")) => FitSelection::Both,
        Some((_, "dim")) => FitSelection::Dim,
        Some((_, "pim")) => FitSelection::Pim,
        Some((line, other)) => {
            return Err(ConfigError::at(line, "fit", format!("expected dim, pim or both, got `{other}`")))
        }
    };
    let uses_dim = truth == Family::Dim || fit.includes(Family::Dim);

    let dist = covariates(&e, p, uses_dim)?;

    let factors = factors(&e, mode, truth, p)?;

    let delta_grid = delta_grid(&e, mode)?;

    let mc = if mode == Mode::Mc {
        let n: usize = e.require("n", "a positive integer", "in mc mode")?;
        if n == 0 {
            return Err(e.error("n", "must be >= 1"));
        }
        let reps: u64 = e.require("reps", "a positive integer", "in mc mode")?;
        if reps < 100 {
            return Err(e.error("reps", format!("must be >= 100, got {reps}")));
        }
        let seed = unsigned(&e, "seed")?.unwrap_or(0);
        if truth == Family::Dim {
            // the local alternative must keep λ positive
            let scale = (n as f64).sqrt();
            if let Some(d) = delta_grid.iter().find(|d| 1.0 + **d / scale <= 0.0) {
                return Err(e.error(
                    if e.get("delta").is_some() { "delta" } else { "delta_min" },
                    format!("Delta = {d} gives lambda <= 0 at n = {n}"),
                ));
            }
        }
        Some(McSettings { n, reps, seed })
    } else {
        for key in ["n", "reps", "seed"] {
            if e.get(key).is_some() {
                return Err(e.error(key, "only used in mc mode"));
            }
        }
        None
    };

    let out = e.get("out").map(|v| PathBuf::from(&v.value));
    let plot_script = e.get("plot_script").map(|v| PathBuf::from(&v.value));

    Ok(RunConfig {
        mode,
        dist,
        null,
        alpha,
        truth,
        fit,
        factors,
        delta_grid,
        mc,
        out,
        plot_script,
    })
}

fn covariates(e: &Entries, p: usize, uses_dim: bool) -> Result<CovariateDistribution, ConfigError> {
    let kind = e.word("covariates").map_or("bernoulli", |(_, v)| v);
    match kind {
        "bernoulli" => {
            for key in ["lo", "hi", "moment_samples", "moment_seed"] {
                if e.get(key).is_some() {
                    return Err(e.error(key, "only used with uniform covariates"));
                }
            }
            if p > MAX_ENUMERATED_COVARIATES {
                return Err(e.error(
                    "p",
                    format!("Bernoulli moments enumerate 2^p points; p must be <= {MAX_ENUMERATED_COVARIATES}"),
                ));
            }
            let q = match e.list("q")? {
                None => vec![0.5; p],
                Some(v) if v.len() == 1 => vec![v[0]; p],
                Some(v) if v.len() == p => v,
                Some(v) => return Err(e.error("q", format!("expected 1 or p = {p} values, got {}", v.len()))),
            };
            if let Some(bad) = q.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
                return Err(e.error("q", format!("probabilities must lie in (0, 1), got {bad}")));
            }
            CovariateDistribution::product_bernoulli(q).map_err(|err| e.error("q", err.to_string()))
        }
        "uniform" => {
            if e.get("q").is_some() {
                return Err(e.error("q", "only used with bernoulli covariates"));
            }
            let lo = e.real("lo")?.unwrap_or(0.0);
            let hi = e.real("hi")?.unwrap_or(1.0);
            if !(lo < hi) {
                return Err(e.error("hi", format!("needs lo < hi, got [{lo}, {hi}]")));
            }
            if uses_dim && lo < 0.0 {
                return Err(e.error("lo", "the DIM needs nonnegative covariates"));
            }
            let samples: usize = e.parse_or("moment_samples", "a positive integer", DEFAULT_MOMENT_SAMPLES)?;
            if samples == 0 {
                return Err(e.error("moment_samples", "must be >= 1"));
            }
            let seed: u64 = e.parse_or("moment_seed", "a nonnegative integer", 0)?;
            CovariateDistribution::sampleable(Generator::Uniform { dim: p, lo, hi }, samples, seed)
                .map_err(|err| e.error("covariates", err.to_string()))
        }
        other => Err(e.error("covariates", format!("expected bernoulli or uniform, got `{other}`"))),
    }
}

fn factors(e: &Entries, mode: Mode, truth: Family, p: usize) -> Result<FactorLevels, ConfigError> {
    let keys = ["f1", "f2", "f3"];
    if truth == Family::Dim {
        if mode == Mode::Grid {
            return Err(e.error("truth", "grid mode sweeps pairwise truths; set truth = pim"));
        }
        if let Some(k) = keys.iter().find(|k| e.get(k).is_some()) {
            return Err(e.error(k, "factors only apply to a pim truth"));
        }
        return Ok(FactorLevels::default());
    }
    let mut levels = [vec![], vec![], vec![]];
    let defaults = FactorLevels::default();
    let default_lists = [defaults.f1, defaults.f2, defaults.f3];
    for (i, key) in keys.iter().enumerate() {
        levels[i] = match e.list(key)? {
            Some(v) => {
                if mode != Mode::Grid && v.len() != 1 {
                    return Err(e.error(key, "expected a single level outside grid mode"));
                }
                v
            }
            None if mode == Mode::Grid => default_lists[i].clone(),
            None => return Err(e.error(key, "required for a pim truth")),
        };
    }
    for (i, key) in keys.iter().enumerate() {
        for &v in &levels[i] {
            let mut f = [0.5, 0.5, 1.0];
            f[i] = v;
            PrimaryFactors::new(f[0], f[1], f[2]).map_err(|err| e.error(key, err.to_string()))?;
        }
    }
    let out = FactorLevels {
        f1: levels[0].clone(),
        f2: levels[1].clone(),
        f3: levels[2].clone(),
    };
    for f in out.cells().map_err(|err| e.error("f1", err.to_string()))? {
        build_eta_from_factors(p, &f).map_err(|err| e.error("f1", err.to_string()))?;
    }
    Ok(out)
}

fn delta_grid(e: &Entries, mode: Mode) -> Result<Vec<f64>, ConfigError> {
    let range_keys = ["delta_min", "delta_max", "delta_steps"];
    if let Some(list) = e.list("delta")? {
        if let Some(k) = range_keys.iter().find(|k| e.get(k).is_some()) {
            return Err(e.error(k, "give either delta or delta_min/delta_max/delta_steps"));
        }
        if list.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(e.error("delta", "values must be strictly increasing"));
        }
        return Ok(list);
    }
    let present = range_keys.iter().filter(|k| e.get(k).is_some()).count();
    if present == 0 {
        return Ok(match mode {
            Mode::Mc => vec![0.0, 1.0, 2.0],
            _ => default_delta_grid(),
        });
    }
    if present != 3 {
        let missing = range_keys.iter().find(|k| e.get(k).is_none()).unwrap();
        return Err(ConfigError::missing(
            missing,
            "delta_min, delta_max and delta_steps must be given together",
        ));
    }
    let min = e.real("delta_min")?.unwrap();
    let max = e.real("delta_max")?.unwrap();
    let steps: usize = unsigned(e, "delta_steps")?.unwrap();
    linear_grid(min, max, steps).map_err(|err| e.error("delta_steps", err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE_ONE: &str = "\
# DIM truth, nine binary covariates
mode = curve
p = 9
covariates = bernoulli
q = 0.5
beta0 = 0
beta = 0.5
sigma2 = 1
truth = dim
fit = both
";

    #[test]
    fn figure_one_config_parses() {
        let c = parse_config(FIGURE_ONE).unwrap();
        assert_eq!(c.mode, Mode::Curve);
        assert_eq!(c.p(), 9);
        assert_eq!(c.null.beta(), &[0.5; 9]);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.delta_grid.len(), 61);
        assert_eq!(c.fit, FitSelection::Both);
        assert!(c.mc.is_none());
    }

    #[test]
    fn negative_variance_names_sigma2_and_its_line() {
        let err = parse_config(&FIGURE_ONE.replace("sigma2 = 1", "sigma2 = -1")).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("sigma2"));
        assert_eq!(err.line, Some(8));
        assert!(err.to_string().contains("sigma2"));
    }

    #[test]
    fn duplicate_and_unknown_keys_are_rejected() {
        let err = parse_config(&format!("{FIGURE_ONE}p = 4\n")).unwrap_err();
        assert_eq!(err.line, Some(11));
        assert!(err.message.contains("duplicate") && err.message.contains("line 3"));
        let err = parse_config(&format!("{FIGURE_ONE}lamda = 2\n")).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("lamda"));
        assert!(parse_config("mode = curve\np 9\n").unwrap_err().line == Some(2));
    }

    #[test]
    fn beta_vector_and_broadcast() {
        let c = parse_config("mode=curve\np=3\nbeta=0.1, 0.2,0.3\n").unwrap();
        assert_eq!(c.null.beta(), &[0.1, 0.2, 0.3]);
        assert!(parse_config("mode=curve\np=3\nbeta=0.1,0.2\n").is_err());
        assert!(parse_config("mode=curve\np=3\nbeta=-0.1\n").is_err());
    }

    #[test]
    fn pim_truth_needs_factors_outside_grid_mode() {
        assert!(parse_config("mode=curve\np=9\ntruth=pim\n").is_err());
        let c = parse_config("mode=curve\np=9\ntruth=pim\nf1=0.2\nf2=0.8\nf3=1\n").unwrap();
        assert_eq!(c.primary_factors(), Some(PrimaryFactors::new(0.2, 0.8, 1.0).unwrap()));
        let g = parse_config("mode=grid\np=9\ntruth=pim\n").unwrap();
        assert_eq!(g.factors, FactorLevels::default());
        assert!(parse_config("mode=grid\np=9\ntruth=dim\n").is_err());
        assert!(parse_config("mode=curve\np=9\ntruth=pim\nf1=0.01\nf2=0.5\nf3=1\n").is_err());
    }

    #[test]
    fn delta_grid_forms() {
        let c = parse_config("mode=curve\np=3\ndelta_min=-1\ndelta_max=1\ndelta_steps=5\n").unwrap();
        assert_eq!(c.delta_grid, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(parse_config("mode=curve\np=3\ndelta_min=-1\ndelta_max=1\n").is_err());
        assert!(parse_config("mode=curve\np=3\ndelta=1,0\n").is_err());
        let c = parse_config("mode=mc\np=3\nn=100\nreps=100\n").unwrap();
        assert_eq!(c.delta_grid, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn mc_settings_are_checked() {
        assert!(parse_config("mode=mc\np=3\nreps=100\n").is_err());
        assert!(parse_config("mode=mc\np=3\nn=100\nreps=10\n").is_err());
        assert!(parse_config("mode=curve\np=3\nn=100\n").is_err());
        let err = parse_config("mode=mc\np=3\nn=4\nreps=100\ndelta=-3\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("delta"));
        let c = parse_config("mode=mc\np=3\nn=100\nreps=100\nseed=9\n").unwrap();
        assert_eq!(c.mc, Some(McSettings { n: 100, reps: 100, seed: 9 }));
    }

    #[test]
    fn uniform_covariates() {
        let c = parse_config("mode=curve\np=3\ncovariates=uniform\nmoment_samples=1000\n").unwrap();
        assert!(matches!(c.dist, CovariateDistribution::Sampleable { mc_samples: 1000, .. }));
        assert!(parse_config("mode=curve\np=3\ncovariates=uniform\nlo=-1\n").is_err());
        assert!(parse_config("mode=curve\np=3\ncovariates=uniform\nq=0.5\n").is_err());
        assert!(parse_config("mode=curve\np=3\ncovariates=normal\n").is_err());
    }
}
