//! Closed-form results checked against independent brute-force computations.

use ipower_core::asymptotics::{chisq_quantile, kl_projection, kl_projection_derivative, noncentral_chisq_sf};
use ipower_core::expectation::{cross_moment, enumerate_support, fisher_information};
use ipower_core::{CovariateDistribution, Family, ModelParams, NullParams};
use nalgebra::DMatrix;

fn setting() -> (CovariateDistribution, NullParams) {
    (
        CovariateDistribution::product_bernoulli(vec![0.3, 0.5, 0.7]).unwrap(),
        NullParams::new(0.2, vec![0.5, 0.3, 0.8], 1.5).unwrap(),
    )
}

fn perturbed(truth: Family, null: &NullParams, j: usize, h: f64) -> ModelParams {
    let mut flat = null.embed(truth).to_flat();
    flat[j] += h;
    ModelParams::from_flat(truth, null.p(), &flat).unwrap()
}

/// Re-minimizes the KL criterion at ω₀ ± h e_j and differences the minimizers.
fn finite_difference_derivative(fit: Family, truth: Family, dist: &CovariateDistribution, null: &NullParams) -> DMatrix<f64> {
    let h = 1e-4;
    let init = null.embed(fit).to_flat();
    let init = &init[..init.len() - 1];
    let d_fit = null.embed(fit).to_flat().len();
    let d_truth = null.embed(truth).to_flat().len();
    let mut out = DMatrix::zeros(d_fit, d_truth);
    for j in 0..d_truth {
        let up = kl_projection(fit, &perturbed(truth, null, j, h), dist, Some(init)).unwrap().to_flat();
        let down = kl_projection(fit, &perturbed(truth, null, j, -h), dist, Some(init)).unwrap().to_flat();
        for i in 0..d_fit {
            out[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    out
}

#[test]
fn projection_derivative_matches_reminimization() {
    let (dist, null) = setting();
    for (fit, truth) in [(Family::Dim, Family::Pim), (Family::Pim, Family::Dim), (Family::Dim, Family::Dim), (Family::Pim, Family::Pim)] {
        let info = fisher_information(fit, &null, &dist).unwrap();
        let cross = cross_moment(fit, truth, &null, &dist).unwrap();
        let analytic = kl_projection_derivative(&info, &cross).unwrap();
        let numeric = finite_difference_derivative(fit, truth, &dist, &null);
        let scale = analytic.amax();
        for i in 0..analytic.nrows() {
            for j in 0..analytic.ncols() {
                let (a, b) = (analytic[(i, j)], numeric[(i, j)]);
                assert!(
                    (a - b).abs() <= 1e-2 * a.abs().max(1e-4 * scale),
                    "{fit} <- {truth} entry ({i},{j}): {a} vs {b}"
                );
            }
        }
    }
}

/// `E[s_F s_Gᵀ]` from finite-difference scores of the log density, integrated
/// over `Y | X` with composite Simpson on ±12σ.
fn quadrature_moment(fit: Family, truth: Family, dist: &CovariateDistribution, null: &NullParams) -> DMatrix<f64> {
    let f0 = null.embed(fit);
    let g0 = null.embed(truth);
    let (df, dg) = (f0.to_flat().len(), g0.to_flat().len());
    let sigma = null.sigma2().sqrt();
    let score = |m: &ModelParams, x: &[f64], y: f64| -> Vec<f64> {
        let base = m.to_flat();
        (0..base.len())
            .map(|j| {
                let h = 1e-5 * base[j].abs().max(1.0);
                let mut up = base.clone();
                let mut down = base.clone();
                up[j] += h;
                down[j] -= h;
                let lu = ModelParams::from_flat(m.family(), m.p(), &up).unwrap().log_density(x, y).unwrap();
                let ld = ModelParams::from_flat(m.family(), m.p(), &down).unwrap().log_density(x, y).unwrap();
                (lu - ld) / (2.0 * h)
            })
            .collect()
    };
    let steps = 600;
    let mut out = DMatrix::zeros(df, dg);
    for (x, w) in enumerate_support(dist).unwrap().iter() {
        let mu = null.additive_mean(&x).unwrap();
        let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
        let step = (hi - lo) / steps as f64;
        for k in 0..=steps {
            let y = lo + k as f64 * step;
            let simpson = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let density = f0.log_density(&x, y).unwrap().exp();
            let coef = w * simpson * step / 3.0 * density;
            let (sf, sg) = (score(&f0, &x, y), score(&g0, &x, y));
            for i in 0..df {
                for j in 0..dg {
                    out[(i, j)] += coef * sf[i] * sg[j];
                }
            }
        }
    }
    out
}

#[test]
fn closed_form_moments_match_quadrature() {
    let (dist, null) = setting();
    for fit in [Family::Dim, Family::Pim] {
        for truth in [Family::Dim, Family::Pim] {
            let closed = cross_moment(fit, truth, &null, &dist).unwrap();
            let quad = quadrature_moment(fit, truth, &dist, &null);
            for i in 0..closed.nrows() {
                for j in 0..closed.ncols() {
                    assert!(
                        (closed[(i, j)] - quad[(i, j)]).abs() < 1e-6,
                        "{fit}/{truth} ({i},{j}): {} vs {}",
                        closed[(i, j)],
                        quad[(i, j)]
                    );
                }
            }
        }
    }
}

fn upper_normal(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

#[test]
fn one_degree_of_freedom_matches_shifted_normal() {
    // χ²₁(δ) is (Z + √δ)², so its tail is two normal tails.
    for i in 0..10 {
        for j in 0..10 {
            let x = 0.05 + 2.5 * i as f64;
            let delta = 0.3 * j as f64 * j as f64;
            let (rx, rd) = (x.sqrt(), delta.sqrt());
            let oracle = upper_normal(rx - rd) + upper_normal(rx + rd);
            let got = noncentral_chisq_sf(x, 1, delta).unwrap();
            assert!((got - oracle).abs() < 1e-10, "x={x} delta={delta}: {got} vs {oracle}");
        }
    }
}

#[test]
fn two_degrees_of_freedom_central_quantile_is_logarithmic() {
    for alpha in [0.5, 0.1, 0.05, 0.01, 1e-6] {
        let q = chisq_quantile(2, alpha).unwrap();
        assert!((q + 2.0 * alpha.ln()).abs() < 1e-9 * q.max(1.0));
    }
}
