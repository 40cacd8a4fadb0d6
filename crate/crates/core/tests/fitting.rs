mod common;

use common::*;
use qreadout::metrics::{achievable_fidelity, fit_double_gaussian, separation_r, DoubleGaussianFit};

const SIGMA: f64 = 0.6758;
const M0: f64 = -0.2149;
const M1: f64 = 2.750;

fn draw(n: usize, seed: u64, components: &[(f64, f64)]) -> Vec<f64> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    let cuts: Vec<f64> = components.iter().map(|c| { acc += c.0; acc }).collect();
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let k = cuts.iter().position(|&c| u < c).unwrap_or(components.len() - 1);
        out.push(components[k].1 + SIGMA * normal(&mut r));
    }
    out
}

#[test]
fn single_gaussians_are_fitted_as_the_dominant_mode() {
    let s0 = draw(20_000, 1, &[(1.0, M0)]);
    let s1 = draw(20_000, 2, &[(1.0, M1)]);
    let fit = fit_double_gaussian(&s0, &s1, 60, 0).unwrap();
    println!("{} ± {}, {} ± {}, {:?} {:?} after {}", fit.mean0, fit.mean0_stderr, fit.mean1, fit.mean1_stderr, fit.minor_means, fit.dominant_weights, fit.history.len());
    assert!(fit.dominant_weights.iter().all(|&w| w >= 0.95), "{:?}", fit.dominant_weights);
    assert!((fit.mean0 - M0).abs() <= 3.0 * fit.mean0_stderr, "{} vs {M0}", fit.mean0);
    assert!((fit.mean1 - M1).abs() <= 3.0 * fit.mean1_stderr, "{} vs {M1}", fit.mean1);
    assert!((fit.sigma / SIGMA - 1.0).abs() < 0.02);
}

#[test]
fn decay_contaminated_mixture_is_recovered() {
    let s0 = draw(25_600, 3, &[(1.0, M0)]);
    let s1 = draw(25_600, 4, &[(0.92, M1), (0.08, M0)]);
    let fit = fit_double_gaussian(&s0, &s1, 60, 0).unwrap();
    let close = |got: f64, want: f64, scale: f64| (got - want).abs() <= 0.05 * scale;
    assert!(close(fit.mean0, M0, M0.abs()), "mean0 {}", fit.mean0);
    assert!(close(fit.mean1, M1, M1), "mean1 {}", fit.mean1);
    assert!(close(fit.sigma, SIGMA, SIGMA), "sigma {}", fit.sigma);
    assert!(close(fit.dominant_weights[1], 0.92, 0.92), "weight {}", fit.dominant_weights[1]);
    // 2048 minor-mode draws put the minor mean's standard error above 5% of |M0|
    assert!(close(fit.minor_means[1], M0, M1 - M0), "minor mean {}", fit.minor_means[1]);
    let r = separation_r(&fit).unwrap();
    let truth = ((M1 - M0) / SIGMA).powi(2);
    assert!((r.r - truth).abs() <= 3.0 * r.r_stderr, "R {} ± {} vs {truth}", r.r, r.r_stderr);
}

#[test]
fn em_log_likelihood_never_decreases() {
    for seed in 0..4 {
        let s0 = draw(3000, 10 + seed, &[(0.97, M0), (0.03, M1)]);
        let s1 = draw(3000, 20 + seed, &[(0.9, M1), (0.1, M0)]);
        let fit = fit_double_gaussian(&s0, &s1, 40, seed).unwrap();
        assert!(fit.history.len() >= 2);
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "seed {seed}: {w:?}");
        }
        assert!((fit.history.last().unwrap() - fit.log_likelihood).abs() <= 1e-9 * fit.log_likelihood.abs());
    }
}

#[test]
fn fit_needs_enough_samples() {
    let few = draw(50, 1, &[(1.0, M0)]);
    let many = draw(500, 2, &[(1.0, M1)]);
    assert!(fit_double_gaussian(&few, &many, 20, 0).is_err());
}

#[test]
fn separation_arithmetic() {
    let fit = |m0, m1, s| DoubleGaussianFit::from_parameters(m0, m1, s, [0.0; 3]);
    assert_eq!(separation_r(&fit(1.0, 1.0, 0.5)).unwrap().r, 0.0);
    let r1 = separation_r(&fit(M0, M1, SIGMA)).unwrap().r;
    let r2 = separation_r(&fit(M0, M1, 2.0 * SIGMA)).unwrap().r;
    assert!((r1 / r2 - 4.0).abs() < 1e-12);
    assert!((r1 - (M1 - M0).powi(2) / (SIGMA * SIGMA)).abs() < 1e-12);
    assert!(separation_r(&fit(0.0, 1.0, 0.0)).is_err());
    assert!((achievable_fidelity(55.56).unwrap() - 0.9999).abs() <= 0.0001);
}
