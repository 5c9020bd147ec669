//! Local-alternative asymptotics of the Wald test under a possibly
//! misspecified fitted family.
//!
//! With data from `ω_n = ω₀ + n^{-1/2} Δ η`, the Wald statistic for
//! `Cθ = ζ₀` is asymptotically noncentral χ²_r(δ), where
//!
//! ```text
//! δ = Δ² vᵀ (C I_F⁻¹ Cᵀ)⁻¹ v,   v = C (∂θ*/∂ω) η,   ∂θ*/∂ω = I_F⁻¹ E[s_F s_Gᵀ]
//! ```
//!
//! and `θ*(ω)` is the Kullback–Leibler projection of the true model onto the
//! fitted family.

use crate::expectation::{enumerate_support, CovariateDistribution};
use crate::linalg::SpdSolver;
use crate::models::{Family, ModelParams};
use crate::optim::LmOptions;
use crate::projection::{additive_least_squares, dim_least_squares, pim_least_squares, WeightedSample};
use crate::special::{chisq_pdf, chisq_sf, gamma_p, gamma_q, ln_gamma};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Linear hypothesis `Cθ = ζ₀` with `C` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    c: DMatrix<f64>,
    zeta0: DVector<f64>,
}

impl ConstraintSpec {
    pub fn new(c: DMatrix<f64>, zeta0: DVector<f64>) -> Result<Self> {
        if c.nrows() == 0 || c.nrows() > c.ncols() {
            return Err(Error::invalid(
                "C",
                format!("needs 1 <= rows <= columns, got {}x{}", c.nrows(), c.ncols()),
            ));
        }
        if zeta0.len() != c.nrows() {
            return Err(Error::DimensionMismatch {
                what: "zeta0",
                expected: c.nrows(),
                got: zeta0.len(),
            });
        }
        let sv = c.clone().svd(false, false).singular_values;
        let (min, max) = (sv.min(), sv.max());
        if !(min > 1e-10 * max) {
            return Err(Error::invalid("C", "must have full row rank"));
        }
        Ok(Self { c, zeta0 })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn zeta0(&self) -> &DVector<f64> {
        &self.zeta0
    }

    /// Degrees of freedom `r`.
    pub fn rank(&self) -> usize {
        self.c.nrows()
    }

    /// `C I⁻¹ Cᵀ`.
    pub fn middle(&self, info: &SpdSolver) -> DMatrix<f64> {
        let x = info.solve(&self.c.transpose());
        &self.c * x
    }
}

/// Scalar size `Δ` and unit direction `η` of the local alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    eta: DVector<f64>,
    delta: f64,
}

impl Direction {
    pub fn new(eta: DVector<f64>, delta: f64) -> Result<Self> {
        let norm = eta.norm();
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::invalid("eta", format!("must have unit length, norm is {norm}")));
        }
        if !delta.is_finite() {
            return Err(Error::invalid("Delta", "must be finite"));
        }
        Ok(Self { eta, delta })
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            eta: self.eta.clone(),
            delta,
        }
    }
}

/// Sensitivity `∂θ*/∂ω = I_F⁻¹ E[s_F s_Gᵀ]` of the KL projection at the null.
pub fn kl_projection_derivative(info_fit: &DMatrix<f64>, cross: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if info_fit.nrows() != cross.nrows() {
        return Err(Error::DimensionMismatch {
            what: "cross moment rows",
            expected: info_fit.nrows(),
            got: cross.nrows(),
        });
    }
    Ok(SpdSolver::new(info_fit)?.solve(cross))
}

fn quadratic_noncentrality(delta: f64, v: &DVector<f64>, middle: &DMatrix<f64>) -> Result<f64> {
    let solver = SpdSolver::new(middle)?;
    let q = v.dot(&solver.solve_vec(v));
    Ok((delta * delta * q).max(0.0))
}

/// Noncentrality δ along `dir` for the test `cs`, general misspecified form.
pub fn noncentrality(
    dir: &Direction,
    cs: &ConstraintSpec,
    info_fit: &DMatrix<f64>,
    dtheta_domega: &DMatrix<f64>,
) -> Result<f64> {
    let d = info_fit.nrows();
    if cs.c.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "constraint columns",
            expected: d,
            got: cs.c.ncols(),
        });
    }
    if dtheta_domega.shape() != (d, dir.eta.len()) {
        return Err(Error::DimensionMismatch {
            what: "projection derivative columns",
            expected: dir.eta.len(),
            got: dtheta_domega.ncols(),
        });
    }
    let v = &cs.c * (dtheta_domega * &dir.eta);
    let info = SpdSolver::new(info_fit)?;
    quadratic_noncentrality(dir.delta, &v, &cs.middle(&info))
}

/// Noncentrality for a correctly specified fit: `Δ² ηᵀCᵀ (C I⁻¹ Cᵀ)⁻¹ C η`.
pub fn reduced_noncentrality(dir: &Direction, cs: &ConstraintSpec, info_fit: &DMatrix<f64>) -> Result<f64> {
    let d = info_fit.nrows();
    if cs.c.ncols() != d || dir.eta.len() != d {
        return Err(Error::DimensionMismatch {
            what: "direction",
            expected: d,
            got: dir.eta.len(),
        });
    }
    let v = &cs.c * &dir.eta;
    let info = SpdSolver::new(info_fit)?;
    quadratic_noncentrality(dir.delta, &v, &cs.middle(&info))
}

/// Residual Poisson mass allowed in the mixture representation.
const POISSON_TAIL: f64 = 1e-12;

/// `P(χ²_r(δ) > x)` as a Poisson(δ/2) mixture of central χ²_{r+2k} tails.
///
/// The sum starts at the Poisson mode and walks outward until a geometric
/// bound on the remaining Poisson mass drops below `1e-12`. Below the mean the
/// lower tail is summed instead and complemented, so truncation never biases
/// a probability close to one.
pub fn noncentral_chisq_sf(x: f64, r: usize, delta: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    if r == 0 {
        return Err(Error::Domain("degrees of freedom must be >= 1".into()));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("noncentrality must be finite and >= 0, got {delta}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let half_r = 0.5 * r as f64;
    let half_x = 0.5 * x;
    if delta == 0.0 {
        return chisq_sf(x, r as f64);
    }
    let tail = if x < r as f64 + delta {
        1.0 - poisson_mixture(0.5 * delta, |k| gamma_p(half_r + k, half_x))?
    } else {
        poisson_mixture(0.5 * delta, |k| gamma_q(half_r + k, half_x))?
    };
    Ok(tail.clamp(0.0, 1.0))
}

/// `Σ_k Poisson(k; lam) · term(k)` for `term` valued in [0, 1].
fn poisson_mixture(lam: f64, term: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mode = libm::floor(lam) as u64;
    let w_mode = libm::exp(-lam + mode as f64 * libm::log(lam) - ln_gamma(mode as f64 + 1.0));

    let mut total = w_mode * term(mode as f64)?;
    let mut down_left = mode > 0;
    let mut up_left = true;
    let (mut k_down, mut w_down) = (mode, w_mode);
    let (mut k_up, mut w_up) = (mode, w_mode);

    let mut steps = 0usize;
    while (down_left || up_left) && steps < 1_000_000 {
        steps += 1;
        if down_left {
            w_down *= k_down as f64 / lam;
            k_down -= 1;
            total += w_down * term(k_down as f64)?;
            let ratio = k_down as f64 / lam;
            let bound = if ratio < 1.0 { w_down * ratio / (1.0 - ratio) } else { 1.0 };
            down_left = k_down > 0 && bound >= 0.5 * POISSON_TAIL;
        }
        if up_left {
            w_up *= lam / (k_up + 1) as f64;
            k_up += 1;
            total += w_up * term(k_up as f64)?;
            let ratio = lam / (k_up + 1) as f64;
            let bound = if ratio < 1.0 { w_up * ratio / (1.0 - ratio) } else { 1.0 };
            up_left = bound >= 0.5 * POISSON_TAIL;
        }
    }
    Ok(total)
}

/// Upper-α quantile of the central χ²_r.
pub fn chisq_quantile(r: usize, alpha: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::Domain("degrees of freedom must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let dof = r as f64;
    let sf = |x: f64| chisq_sf(x, dof);
    let mut lo = 0.0;
    let mut hi = dof.max(1.0);
    while sf(hi)? > alpha {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = sf(x)? - alpha;
        if f == 0.0 {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let pdf = chisq_pdf(x, dof);
        let newton = x + f / pdf;
        x = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// `P(χ²_r(δ) > χ²_{r,α})`.
pub fn asymptotic_power(delta: f64, r: usize, alpha: f64) -> Result<f64> {
    noncentral_chisq_sf(chisq_quantile(r, alpha)?, r, delta)
}

/// Smallest noncentrality at which the level-`alpha` test on `r` degrees of
/// freedom reaches `power`, by bracketing and bisection.
pub fn required_noncentrality(r: usize, alpha: f64, power: f64) -> Result<f64> {
    if !(power > alpha && power < 1.0) {
        return Err(Error::invalid("power", format!("must lie in (alpha, 1), got {power}")));
    }
    let crit = chisq_quantile(r, alpha)?;
    let (mut lo, mut hi) = (0.0, 1.0);
    while noncentral_chisq_sf(crit, r, hi)? < power {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Degenerate("target power out of reach".into()));
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if noncentral_chisq_sf(crit, r, mid)? < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Kullback–Leibler projection of the true model `truth` onto `fit`, for an
/// enumerable covariate law.
///
/// For normal errors the mean parameters minimize `E_X[(μ_G − μ_F)²]` and
/// σ²* is σ²_G plus that minimum. `init` seeds the DIM search (natural
/// mean parameters).
pub fn kl_projection(
    fit: Family,
    truth: &ModelParams,
    dist: &CovariateDistribution,
    init: Option<&[f64]>,
) -> Result<ModelParams> {
    let p = truth.p();
    let support = enumerate_support(dist)?;
    let mut xs = Vec::with_capacity(support.len() * p);
    let mut target = Vec::with_capacity(support.len());
    let mut weight = Vec::with_capacity(support.len());
    for (x, w) in support.iter() {
        target.push(truth.mean(&x)?);
        weight.push(w);
        xs.extend_from_slice(&x);
    }
    let sample = WeightedSample::new(&xs, p, &target, Some(&weight))?;
    let opts = LmOptions {
        max_iter: 2000,
        ..LmOptions::default()
    };
    let fitted = match fit {
        Family::Additive => additive_least_squares(&sample)?,
        Family::Pim => pim_least_squares(&sample)?,
        Family::Dim => dim_least_squares(&sample, init, &opts)?,
    };
    if !fitted.converged {
        return Err(Error::Degenerate("KL projection did not converge".into()));
    }
    let mut flat = fitted.mean_params;
    flat.push(truth.sigma2() + fitted.rss);
    ModelParams::from_flat(fit, p, &flat)
}
