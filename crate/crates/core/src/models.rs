//! Additive, diffuse-interaction (DIM) and pairwise-interaction (PIM) normal
//! regression models.
//!
//! Every family is written as a flat parameter vector in the order
//! `(β₀, β₁…β_p, [λ | γ₁₂…γ₍p−1₎p], σ²)`; see [`ParamIndexMap`]. Pairwise
//! coefficients are ordered lexicographically by `(i, j)`, `i < j`.

use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Additive,
    Dim,
    Pim,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Additive => "additive",
            Family::Dim => "dim",
            Family::Pim => "pim",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "additive" => Ok(Family::Additive),
            "dim" => Ok(Family::Dim),
            "pim" => Ok(Family::Pim),
            other => Err(Error::invalid("family", format!("unknown family `{other}`"))),
        }
    }
}

/// Number of unordered covariate pairs, `p(p−1)/2`.
#[inline]
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in lexicographic order.
#[inline]
pub fn pair_index(i: usize, j: usize, p: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// `t log t` with the limit value 0 at `t = 0`.
#[inline]
pub(crate) fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * libm::log(t)
    }
}

/// Coordinate layout of a family's flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndexMap {
    family: Family,
    p: usize,
}

impl ParamIndexMap {
    pub fn new(family: Family, p: usize) -> Self {
        Self { family, p }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of interaction parameters: 0, 1 (λ) or `p(p−1)/2` (γ).
    pub fn interaction_dim(&self) -> usize {
        match self.family {
            Family::Additive => 0,
            Family::Dim => 1,
            Family::Pim => pair_count(self.p),
        }
    }

    /// Number of mean parameters (everything except σ²).
    pub fn mean_dim(&self) -> usize {
        1 + self.p + self.interaction_dim()
    }

    pub fn dim(&self) -> usize {
        self.mean_dim() + 1
    }

    pub fn beta0_index(&self) -> usize {
        0
    }

    pub fn beta_index(&self, i: usize) -> usize {
        1 + i
    }

    pub fn interaction_range(&self) -> core::ops::Range<usize> {
        let start = 1 + self.p;
        start..start + self.interaction_dim()
    }

    pub fn sigma2_index(&self) -> usize {
        self.mean_dim()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.push(String::from("beta0"));
        for i in 1..=self.p {
            names.push(format!("beta{i}"));
        }
        match self.family {
            Family::Additive => {}
            Family::Dim => names.push(String::from("lambda")),
            Family::Pim => {
                for i in 1..=self.p {
                    for j in i + 1..=self.p {
                        names.push(format!("gamma{i}_{j}"));
                    }
                }
            }
        }
        names.push(String::from("sigma2"));
        names
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", format!("must be > 0, got {sigma2}")));
    }
    Ok(())
}

/// Additive-model parameters shared by both interaction families at the null.
#[derive(Debug, Clone, PartialEq)]
pub struct NullParams {
    beta0: f64,
    beta: Vec<f64>,
    sigma2: f64,
}

impl NullParams {
    pub fn new(beta0: f64, beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        if !beta0.is_finite() {
            return Err(Error::invalid("beta0", "must be finite"));
        }
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid(
                "beta",
                format!("main effects must be finite and >= 0, got {b}"),
            ));
        }
        Ok(Self {
            beta0,
            beta,
            sigma2,
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Same coefficients with a different error variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.beta0, self.beta.clone(), sigma2)
    }

    pub fn additive_mean(&self, x: &[f64]) -> Result<f64> {
        check_len("covariate vector", self.p(), x.len())?;
        Ok(self.beta0 + dot(&self.beta, x))
    }

    /// The DIM member at λ = 1.
    pub fn to_dim(&self) -> DimParams {
        DimParams {
            beta0: self.beta0,
            beta: self.beta.clone(),
            lambda: 1.0,
            sigma2: self.sigma2,
        }
    }

    /// The PIM member at γ = 0.
    pub fn to_pim(&self) -> PimParams {
        PimParams {
            beta0: self.beta0,
            beta: self.beta.clone(),
            gamma: vec![0.0; pair_count(self.p())],
            sigma2: self.sigma2,
        }
    }

    /// The member of `family` that coincides with the additive null.
    pub fn embed(&self, family: Family) -> ModelParams {
        match family {
            Family::Additive => ModelParams::Additive(self.clone()),
            Family::Dim => ModelParams::Dim(self.to_dim()),
            Family::Pim => ModelParams::Pim(self.to_pim()),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimParams {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub sigma2: f64,
}

impl DimParams {
    pub fn new(beta0: f64, beta: Vec<f64>, lambda: f64, sigma2: f64) -> Result<Self> {
        let null = NullParams::new(beta0, beta, sigma2)?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
        }
        Ok(Self {
            lambda,
            ..null.to_dim()
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PimParams {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma2: f64,
}

impl PimParams {
    pub fn new(beta0: f64, beta: Vec<f64>, gamma: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        check_len("pairwise coefficients", pair_count(beta.len()), gamma.len())?;
        Ok(Self {
            beta0,
            beta,
            gamma,
            sigma2,
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

fn dim_products(beta: &[f64], x: &[f64]) -> Result<()> {
    check_len("covariate vector", beta.len(), x.len())?;
    for (b, xi) in beta.iter().zip(x) {
        let u = b * xi;
        if u < 0.0 || u.is_nan() {
            return Err(Error::Domain(format!(
                "DIM requires beta_i * x_i >= 0, got {b} * {xi}"
            )));
        }
    }
    Ok(())
}

/// DIM mean `β₀ + {Σ(β_i x_i)^λ}^{1/λ}`; zero products drop out of the sum.
pub fn dim_mean(params: &DimParams, x: &[f64]) -> Result<f64> {
    dim_products(&params.beta, x)?;
    let lambda = params.lambda;
    let total: f64 = params
        .beta
        .iter()
        .zip(x)
        .map(|(b, xi)| b * xi)
        .filter(|u| *u > 0.0)
        .map(|u| libm::pow(u, lambda))
        .sum();
    if total == 0.0 {
        return Ok(params.beta0);
    }
    Ok(params.beta0 + libm::pow(total, 1.0 / lambda))
}

/// PIM mean `β₀ + Σβ_i x_i + Σ_{i<j} γ_ij x_i x_j`.
pub fn pim_mean(params: &PimParams, x: &[f64]) -> Result<f64> {
    let p = params.p();
    check_len("covariate vector", p, x.len())?;
    check_len("pairwise coefficients", pair_count(p), params.gamma.len())?;
    let mut mu = params.beta0 + dot(&params.beta, x);
    let mut k = 0;
    for i in 0..p {
        for j in i + 1..p {
            mu += params.gamma[k] * x[i] * x[j];
            k += 1;
        }
    }
    Ok(mu)
}

/// Mean gradient of the DIM at λ = 1, in `(β₀, β₁…β_p, λ)` order.
pub fn dim_mean_gradient_at_null(params: &NullParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.p() + 2];
    write_dim_gradient_at_null(params, x, &mut out)?;
    Ok(out)
}

fn write_dim_gradient_at_null(params: &NullParams, x: &[f64], out: &mut [f64]) -> Result<()> {
    dim_products(&params.beta, x)?;
    let p = params.p();
    out[0] = 1.0;
    out[1..=p].copy_from_slice(x);
    let mut s = 0.0;
    let mut terms = 0.0;
    for (b, xi) in params.beta.iter().zip(x) {
        let u = b * xi;
        s += u;
        terms += xlogx(u);
    }
    out[p + 1] = terms - xlogx(s);
    Ok(())
}

/// Mean gradient of the PIM (at any γ), `(1, x₁…x_p, x₁x₂, x₁x₃, …, x_{p−1}x_p)`.
pub fn pim_mean_gradient_at_null(params: &NullParams, x: &[f64]) -> Result<Vec<f64>> {
    let p = params.p();
    check_len("covariate vector", p, x.len())?;
    let mut out = vec![0.0; 1 + p + pair_count(p)];
    write_pim_gradient(x, &mut out);
    Ok(out)
}

/// Writes one row of the pairwise-expanded design `(1, x, x_i x_j)`.
pub fn write_pim_gradient(x: &[f64], out: &mut [f64]) {
    let p = x.len();
    out[0] = 1.0;
    out[1..=p].copy_from_slice(x);
    let mut k = p + 1;
    for i in 0..p {
        for j in i + 1..p {
            out[k] = x[i] * x[j];
            k += 1;
        }
    }
}

/// Writes the mean gradient of `family` at the null into `out`
/// (length `ParamIndexMap::mean_dim`).
pub fn mean_gradient_at_null_into(
    family: Family,
    params: &NullParams,
    x: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let map = ParamIndexMap::new(family, params.p());
    check_len("covariate vector", params.p(), x.len())?;
    check_len("gradient buffer", map.mean_dim(), out.len())?;
    match family {
        Family::Additive => {
            out[0] = 1.0;
            out[1..].copy_from_slice(x);
            Ok(())
        }
        Family::Dim => write_dim_gradient_at_null(params, x, out),
        Family::Pim => {
            write_pim_gradient(x, out);
            Ok(())
        }
    }
}

pub fn mean_gradient_at_null(family: Family, params: &NullParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ParamIndexMap::new(family, params.p()).mean_dim()];
    mean_gradient_at_null_into(family, params, x, &mut out)?;
    Ok(out)
}

/// Score of `family` at the additive null, σ² as the last coordinate.
pub fn score_at_null(family: Family, params: &NullParams, x: &[f64], y: f64) -> Result<Vec<f64>> {
    let mut g = mean_gradient_at_null(family, params, x)?;
    let resid = y - params.additive_mean(x)?;
    let s2 = params.sigma2;
    for gi in g.iter_mut() {
        *gi *= resid / s2;
    }
    g.push(resid * resid / (2.0 * s2 * s2) - 1.0 / (2.0 * s2));
    Ok(g)
}

/// A parameter point of any of the three families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Additive(NullParams),
    Dim(DimParams),
    Pim(PimParams),
}

impl ModelParams {
    pub fn family(&self) -> Family {
        match self {
            ModelParams::Additive(_) => Family::Additive,
            ModelParams::Dim(_) => Family::Dim,
            ModelParams::Pim(_) => Family::Pim,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ModelParams::Additive(a) => a.p(),
            ModelParams::Dim(d) => d.p(),
            ModelParams::Pim(m) => m.p(),
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            ModelParams::Additive(a) => a.sigma2,
            ModelParams::Dim(d) => d.sigma2,
            ModelParams::Pim(m) => m.sigma2,
        }
    }

    pub fn index_map(&self) -> ParamIndexMap {
        ParamIndexMap::new(self.family(), self.p())
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        match self {
            ModelParams::Additive(a) => a.additive_mean(x),
            ModelParams::Dim(d) => dim_mean(d, x),
            ModelParams::Pim(m) => pim_mean(m, x),
        }
    }

    /// Mean gradient at this parameter point (not only at the null).
    pub fn mean_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let map = self.index_map();
        check_len("covariate vector", self.p(), x.len())?;
        check_len("gradient buffer", map.mean_dim(), out.len())?;
        match self {
            ModelParams::Additive(_) => {
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            ModelParams::Pim(_) => write_pim_gradient(x, out),
            ModelParams::Dim(d) => dim_gradient(d, x, out)?,
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64], y: f64) -> Result<f64> {
        let s2 = self.sigma2();
        let r = y - self.mean(x)?;
        Ok(-0.5 * libm::log(2.0 * PI * s2) - r * r / (2.0 * s2))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.index_map().dim());
        match self {
            ModelParams::Additive(a) => {
                v.push(a.beta0);
                v.extend_from_slice(&a.beta);
                v.push(a.sigma2);
            }
            ModelParams::Dim(d) => {
                v.push(d.beta0);
                v.extend_from_slice(&d.beta);
                v.push(d.lambda);
                v.push(d.sigma2);
            }
            ModelParams::Pim(m) => {
                v.push(m.beta0);
                v.extend_from_slice(&m.beta);
                v.extend_from_slice(&m.gamma);
                v.push(m.sigma2);
            }
        }
        v
    }

    pub fn from_flat(family: Family, p: usize, flat: &[f64]) -> Result<Self> {
        let map = ParamIndexMap::new(family, p);
        check_len("flat parameter vector", map.dim(), flat.len())?;
        let beta0 = flat[0];
        let beta = flat[1..=p].to_vec();
        let sigma2 = flat[map.sigma2_index()];
        Ok(match family {
            Family::Additive => ModelParams::Additive(NullParams::new(beta0, beta, sigma2)?),
            Family::Dim => ModelParams::Dim(DimParams::new(beta0, beta, flat[p + 1], sigma2)?),
            Family::Pim => ModelParams::Pim(PimParams::new(
                beta0,
                beta,
                flat[map.interaction_range()].to_vec(),
                sigma2,
            )?),
        })
    }
}

// ∂μ/∂β_j = x_j (u_j/M)^{λ−1},  ∂μ/∂λ = (M/λ) Σ w_i log(u_i/M),
// with u_i = β_i x_i, M = (Σ u_i^λ)^{1/λ}, w_i = u_i^λ / Σ u^λ.
fn dim_gradient(params: &DimParams, x: &[f64], out: &mut [f64]) -> Result<()> {
    dim_products(&params.beta, x)?;
    let p = params.p();
    let lambda = params.lambda;
    out[0] = 1.0;
    let total: f64 = params
        .beta
        .iter()
        .zip(x)
        .map(|(b, xi)| b * xi)
        .filter(|u| *u > 0.0)
        .map(|u| libm::pow(u, lambda))
        .sum();
    if total == 0.0 {
        out[1..=p].copy_from_slice(x);
        out[p + 1] = 0.0;
        return Ok(());
    }
    let m = libm::pow(total, 1.0 / lambda);
    let mut dlambda = 0.0;
    for j in 0..p {
        let xj = x[j];
        let u = params.beta[j] * xj;
        out[1 + j] = if xj == 0.0 {
            0.0
        } else if u == 0.0 {
            if lambda == 1.0 {
                xj
            } else if lambda > 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            let ratio = u / m;
            dlambda += libm::pow(u, lambda) / total * libm::log(ratio);
            xj * libm::pow(ratio, lambda - 1.0)
        };
    }
    out[p + 1] = m / lambda * dlambda;
    Ok(())
}
