//! Assignment fidelity, double-Gaussian fits of the projected statistic,
//! separation R and achievable fidelity.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Error function, accurate to about 1e-15 absolute.
///
/// Uses the positive-term series `erf(x) = 2x e^{−x²}/√π Σ (2x²)ⁿ/(2n+1)!!`
/// for |x| < 3 and the continued fraction for `erfc` beyond.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        erf_series(x)
    } else {
        1.0 - erfc_continued_fraction(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 3.0 {
        1.0 - erf(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    FRAC_2_SQRT_PI * x * (-x2).exp() * sum
}

/// erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), by modified Lentz.
fn erfc_continued_fraction(x: f64) -> f64 {
    if x > 27.0 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// F = ½ + ½·erf(√(R/8)).
pub fn achievable_fidelity(r: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::invalid(format!("separation must be non-negative, got {r}")));
    }
    if r.is_infinite() {
        return Ok(1.0);
    }
    Ok(0.5 + 0.5 * erf((r / 8.0).sqrt()))
}

/// dF/dR of [`achievable_fidelity`].
pub fn achievable_fidelity_slope(r: f64) -> f64 {
    if r <= 0.0 {
        return f64::INFINITY;
    }
    let u = (r / 8.0).sqrt();
    0.5 * FRAC_2_SQRT_PI * (-u * u).exp() / (16.0 * u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    /// P(outcome 0 | prepared 1).
    pub p01: f64,
    /// P(outcome 1 | prepared 0).
    pub p10: f64,
    pub n0: usize,
    pub n1: usize,
    pub errors01: usize,
    pub errors10: usize,
    pub p01_stderr: f64,
    pub p10_stderr: f64,
    pub stderr: f64,
}

impl FidelityReport {
    pub fn from_counts(n0: usize, n1: usize, errors10: usize, errors01: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::UndefinedFidelity(1));
        }
        if n1 == 0 {
            return Err(Error::UndefinedFidelity(0));
        }
        let p01 = errors01 as f64 / n1 as f64;
        let p10 = errors10 as f64 / n0 as f64;
        let p01_stderr = (p01 * (1.0 - p01) / n1 as f64).sqrt();
        let p10_stderr = (p10 * (1.0 - p10) / n0 as f64).sqrt();
        Ok(Self {
            fidelity: 1.0 - 0.5 * (p01 + p10),
            p01,
            p10,
            n0,
            n1,
            errors01,
            errors10,
            p01_stderr,
            p10_stderr,
            stderr: 0.5 * (p01_stderr.powi(2) + p10_stderr.powi(2)).sqrt(),
        })
    }
}

/// F_a = 1 − (P(0|1) + P(1|0))/2 from binary outcomes and preparation labels.
pub fn assignment_fidelity(predicted: &[u8], truth: &[u8]) -> Result<FidelityReport> {
    check_dim(truth.len(), predicted.len())?;
    let (mut n0, mut n1, mut e10, mut e01) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (t, p) {
            (0, 0) => n0 += 1,
            (0, 1) => {
                n0 += 1;
                e10 += 1
            }
            (1, 1) => n1 += 1,
            (1, 0) => {
                n1 += 1;
                e01 += 1
            }
            (0 | 1, other) | (other, _) => return Err(Error::UnknownLabel(other)),
        }
    }
    FidelityReport::from_counts(n0, n1, e10, e01)
}

/// Equal-variance two-component mixture per class, σ shared by all four components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleGaussianFit {
    /// Dominant-component mean of class 0 (⟨S₀⟩).
    pub mean0: f64,
    /// Dominant-component mean of class 1 (⟨S₁⟩).
    pub mean1: f64,
    pub sigma: f64,
    /// Minor-component means per class.
    pub minor_means: [f64; 2],
    /// Dominant-component weight per class; the minor weight is its complement.
    pub dominant_weights: [f64; 2],
    pub mean0_stderr: f64,
    pub mean1_stderr: f64,
    pub sigma_stderr: f64,
    pub log_likelihood: f64,
    /// Log-likelihood per EM iteration of the selected restart.
    pub history: Vec<f64>,
    pub chi_square: f64,
    pub chi_square_dof: usize,
}

impl DoubleGaussianFit {
    /// Fit result from known parameters with given standard errors.
    pub fn from_parameters(mean0: f64, mean1: f64, sigma: f64, stderrs: [f64; 3]) -> Self {
        Self {
            mean0,
            mean1,
            sigma,
            minor_means: [mean1, mean0],
            dominant_weights: [1.0, 1.0],
            mean0_stderr: stderrs[0],
            mean1_stderr: stderrs[1],
            sigma_stderr: stderrs[2],
            log_likelihood: f64::NAN,
            history: Vec::new(),
            chi_square: f64::NAN,
            chi_square_dof: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub r: f64,
    pub r_stderr: f64,
    pub achievable: f64,
    pub achievable_stderr: f64,
}

/// R = (⟨S₀⟩ − ⟨S₁⟩)²/σ² with first-order error propagation.
pub fn separation_r(fit: &DoubleGaussianFit) -> Result<SeparationResult> {
    if !(fit.sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {}", fit.sigma)));
    }
    let delta = fit.mean0 - fit.mean1;
    let s2 = fit.sigma * fit.sigma;
    let r = delta * delta / s2;
    let dm = 2.0 * delta / s2;
    let ds = -2.0 * delta * delta / (s2 * fit.sigma);
    let r_stderr = ((dm * fit.mean0_stderr).powi(2) + (dm * fit.mean1_stderr).powi(2) + (ds * fit.sigma_stderr).powi(2)).sqrt();
    let achievable = achievable_fidelity(r)?;
    let slope = achievable_fidelity_slope(r);
    let achievable_stderr = if slope.is_finite() { slope * r_stderr } else { 0.0 };
    Ok(SeparationResult { r, r_stderr, achievable, achievable_stderr })
}

struct EmState {
    means: [[f64; 2]; 2],
    weights: [f64; 2],
    sigma: f64,
}

const EM_RESTARTS: usize = 10;
const EM_MAX_ITER: usize = 2000;
const EM_TOL: f64 = 1e-10;

fn log_norm(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_likelihood(data: [&[f64]; 2], st: &EmState) -> f64 {
    let mut ll = 0.0;
    for c in 0..2 {
        let (w, m) = (st.weights[c], st.means[c]);
        for &x in data[c] {
            ll += log_sum_exp(w.ln() + log_norm(x, m[0], st.sigma), (1.0 - w).ln() + log_norm(x, m[1], st.sigma));
        }
    }
    ll
}

/// One pass over the data: log-likelihood at `st` and the EM update from it.
fn em_step(data: [&[f64]; 2], st: &EmState) -> (f64, EmState) {
    let n_total = (data[0].len() + data[1].len()) as f64;
    let norm = -st.sigma.ln() - 0.5 * (2.0 * PI).ln();
    let inv2s2 = 0.5 / (st.sigma * st.sigma);
    let mut ll = 0.0;
    let mut means = st.means;
    let mut weights = st.weights;
    let mut stats = [[0.0f64; 5]; 2];
    for c in 0..2 {
        let (lw, lv) = (st.weights[c].ln(), (1.0 - st.weights[c]).ln());
        let m = st.means[c];
        // Σr, Σr·x, Σ(1−r)·x, Σr·x², Σ(1−r)·x²
        let acc = &mut stats[c];
        for &x in data[c] {
            let a = lw - (x - m[0]).powi(2) * inv2s2;
            let b = lv - (x - m[1]).powi(2) * inv2s2;
            let lse = log_sum_exp(a, b);
            ll += lse + norm;
            let r = (a - lse).exp();
            acc[0] += r;
            acc[1] += r * x;
            acc[2] += (1.0 - r) * x;
            acc[3] += r * x * x;
            acc[4] += (1.0 - r) * x * x;
        }
        let n = data[c].len() as f64;
        weights[c] = acc[0] / n;
        if acc[0] > 0.0 {
            means[c][0] = acc[1] / acc[0];
        }
        if n - acc[0] > 0.0 {
            means[c][1] = acc[2] / (n - acc[0]);
        }
    }
    let mut ss = 0.0;
    for c in 0..2 {
        let [r, rx, qx, rxx, qxx] = stats[c];
        let q = data[c].len() as f64 - r;
        let (m0, m1) = (means[c][0], means[c][1]);
        ss += rxx - 2.0 * m0 * rx + r * m0 * m0 + qxx - 2.0 * m1 * qx + q * m1 * m1;
    }
    (ll, EmState { means, weights, sigma: (ss.max(0.0) / n_total).sqrt() })
}

fn run_em(data: [&[f64]; 2], mut st: EmState, scale: f64) -> Option<(EmState, Vec<f64>)> {
    let mut history = Vec::new();
    for _ in 0..EM_MAX_ITER {
        let (ll, next) = em_step(data, &st);
        if !(next.sigma.is_finite() && next.sigma > 1e-9 * scale) || next.weights.iter().any(|w| !w.is_finite()) {
            return None;
        }
        let converged = history.last().is_some_and(|&prev: &f64| (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0));
        history.push(ll);
        if converged {
            break;
        }
        st = next;
    }
    Some((st, history))
}

/// Standard errors of (dominant mean 0, dominant mean 1, σ) from the inverse
/// of the numerically differentiated observed information. `None` when the
/// likelihood surface is not locally concave.
fn observed_stderrs(data: [&[f64]; 2], st: &EmState) -> Option<[f64; 3]> {
    // θ = (m00, m01, m10, m11, logit w0, logit w1, ln σ)
    let logit = |w: f64| (w / (1.0 - w)).ln();
    let theta = [st.means[0][0], st.means[0][1], st.means[1][0], st.means[1][1], logit(st.weights[0]), logit(st.weights[1]), st.sigma.ln()];
    if theta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let ll = |t: &[f64; 7]| {
        let w = |z: f64| 1.0 / (1.0 + (-z).exp());
        let s = EmState { means: [[t[0], t[1]], [t[2], t[3]]], weights: [w(t[4]), w(t[5])], sigma: t[6].exp() };
        log_likelihood(data, &s)
    };
    let h: [f64; 7] = std::array::from_fn(|i| if i < 4 { 1e-4 * st.sigma } else { 1e-4 });
    let mut hess = nalgebra::SMatrix::<f64, 7, 7>::zeros();
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut t = theta;
        t[i] += di;
        t[j] += dj;
        ll(&t)
    };
    for i in 0..7 {
        for j in i..7 {
            let v = if i == j {
                (shifted(i, h[i], i, 0.0) - 2.0 * ll(&theta) + shifted(i, -h[i], i, 0.0)) / (h[i] * h[i])
            } else {
                (shifted(i, h[i], j, h[j]) - shifted(i, h[i], j, -h[j]) - shifted(i, -h[i], j, h[j]) + shifted(i, -h[i], j, -h[j]))
                    / (4.0 * h[i] * h[j])
            };
            hess[(i, j)] = -v;
            hess[(j, i)] = -v;
        }
    }
    let cov = hess.cholesky()?.inverse();
    let dominant = |c: usize| if st.weights[c] >= 0.5 { 2 * c } else { 2 * c + 1 };
    let (i0, i1) = (dominant(0), dominant(1));
    let out = [cov[(i0, i0)].sqrt(), cov[(i1, i1)].sqrt(), st.sigma * cov[(6, 6)].sqrt()];
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)]
}

/// Fits the projected statistic of both classes by EM with restarts; the best
/// log-likelihood wins. The dominant component of each class supplies ⟨S_c⟩.
pub fn fit_double_gaussian(samples0: &[f64], samples1: &[f64], bins: usize, seed: u64) -> Result<DoubleGaussianFit> {
    if samples0.len() < 100 || samples1.len() < 100 {
        return Err(Error::invalid("double-Gaussian fit needs at least 100 samples per class"));
    }
    if bins < 2 {
        return Err(Error::invalid("histogram needs at least two bins"));
    }
    if samples0.iter().chain(samples1).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let data = [samples0, samples1];
    let sorted: Vec<Vec<f64>> = data.iter().map(|d| {
        let mut s = d.to_vec();
        s.sort_by(f64::total_cmp);
        s
    }).collect();
    let all_mean = samples0.iter().chain(samples1).sum::<f64>() / (samples0.len() + samples1.len()) as f64;
    let scale = (samples0.iter().chain(samples1).map(|x| (x - all_mean).powi(2)).sum::<f64>()
        / (samples0.len() + samples1.len()) as f64)
        .sqrt();
    if scale == 0.0 {
        return Err(Error::FitFailed("all samples identical".into()));
    }
    let (med0, med1) = (median(samples0), median(samples1));
    let iqr = |s: &[f64]| quantile(s, 0.75) - quantile(s, 0.25);
    let sigma0 = (0.5 * (iqr(&sorted[0]) + iqr(&sorted[1])) / 1.349).max(1e-6 * scale);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(EmState, Vec<f64>)> = None;
    for restart in 0..EM_RESTARTS {
        let init = if restart == 0 {
            EmState { means: [[med0, med1], [med1, med0]], weights: [0.95, 0.95], sigma: sigma0 }
        } else {
            let q = |c: usize, rng: &mut ChaCha8Rng| quantile(&sorted[c], rng.random::<f64>());
            EmState {
                means: [[q(0, &mut rng), q(0, &mut rng)], [q(1, &mut rng), q(1, &mut rng)]],
                weights: [rng.random_range(0.5..0.99), rng.random_range(0.5..0.99)],
                sigma: sigma0 * rng.random_range(0.5..2.0),
            }
        };
        if let Some((st, hist)) = run_em(data, init, scale) {
            let ll = *hist.last().expect("nonempty");
            if best.as_ref().is_none_or(|(_, h)| ll > *h.last().expect("nonempty")) {
                best = Some((st, hist));
            }
        }
    }
    let (st, history) = best.ok_or_else(|| Error::FitFailed("every EM restart collapsed".into()))?;

    let dominant = |c: usize| if st.weights[c] >= 0.5 { (st.means[c][0], st.means[c][1], st.weights[c]) } else { (st.means[c][1], st.means[c][0], 1.0 - st.weights[c]) };
    let (m0, o0, w0) = dominant(0);
    let (m1, o1, w1) = dominant(1);
    let n0 = samples0.len() as f64;
    let n1 = samples1.len() as f64;

    let stderrs = observed_stderrs(data, &st)
        .unwrap_or([st.sigma / (n0 * w0).sqrt(), st.sigma / (n1 * w1).sqrt(), st.sigma / (2.0 * (n0 + n1)).sqrt()]);

    // chi-square of per-class histograms against the fitted mixture
    let mut chi = 0.0;
    let mut used = 0usize;
    for (c, (mu_a, mu_b, w)) in [(0, (m0, o0, w0)), (1, (m1, o1, w1))] {
        let s = &sorted[c];
        let (lo, hi) = (s[0], s[s.len() - 1]);
        let width = (hi - lo) / bins as f64;
        if width <= 0.0 {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for &x in s {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        let cdf = |x: f64| {
            let phi = |m: f64| 0.5 * erfc(-(x - m) / (st.sigma * std::f64::consts::SQRT_2));
            w * phi(mu_a) + (1.0 - w) * phi(mu_b)
        };
        for (b, &o) in counts.iter().enumerate() {
            let e = s.len() as f64 * (cdf(lo + (b + 1) as f64 * width) - cdf(lo + b as f64 * width));
            if e > 0.0 {
                chi += (o as f64 - e).powi(2) / e;
                used += 1;
            }
        }
    }

    Ok(DoubleGaussianFit {
        mean0: m0,
        mean1: m1,
        sigma: st.sigma,
        minor_means: [o0, o1],
        dominant_weights: [w0, w1],
        mean0_stderr: stderrs[0],
        mean1_stderr: stderrs[1],
        sigma_stderr: stderrs[2],
        log_likelihood: *history.last().expect("nonempty"),
        history,
        chi_square: chi,
        chi_square_dof: used.saturating_sub(7),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // erf reference values (Abramowitz & Stegun / high-precision tables)
    const TABLE: [(f64, f64); 9] = [
        (0.0, 0.0),
        (0.1, 0.112_462_916_018_284_9),
        (0.5, 0.520_499_877_813_046_5),
        (1.0, 0.842_700_792_949_714_9),
        (1.5, 0.966_105_146_475_310_7),
        (2.0, 0.995_322_265_018_952_7),
        (2.5, 0.999_593_047_982_555),
        (3.0, 0.999_977_909_503_001_4),
        (4.0, 0.999_999_984_582_742_1),
    ];

    #[test]
    fn erf_matches_table() {
        for (x, v) in TABLE {
            assert!((erf(x) - v).abs() < 1e-14, "erf({x}) = {} vs {v}", erf(x));
            assert!((erf(-x) + v).abs() < 1e-14);
        }
    }

    #[test]
    fn erfc_tail() {
        // erfc(5) = 1.5374597944280348e-12
        assert!((erfc(5.0) / 1.537_459_794_428_034_8e-12 - 1.0).abs() < 1e-12);
        assert!((erf(2.9999999) - erf(3.0000001)).abs() < 1e-8);
    }

    #[test]
    fn achievable_fidelity_limits() {
        assert_eq!(achievable_fidelity(0.0).unwrap(), 0.5);
        assert_eq!(achievable_fidelity(f64::INFINITY).unwrap(), 1.0);
        assert!(achievable_fidelity(-1.0).is_err());
    }

    #[test]
    fn fidelity_arithmetic() {
        let truth = [0, 0, 1, 1];
        assert_eq!(assignment_fidelity(&truth, &truth).unwrap().fidelity, 1.0);
        assert_eq!(assignment_fidelity(&[0, 0, 0, 0], &truth).unwrap().fidelity, 0.5);
        let r = FidelityReport::from_counts(100, 100, 3, 5).unwrap();
        assert!((r.fidelity - 0.96).abs() < 1e-15);
        assert!(matches!(assignment_fidelity(&[0, 0], &[1, 1]), Err(Error::UndefinedFidelity(1))));
    }

    #[test]
    fn separation_scaling() {
        let f = DoubleGaussianFit::from_parameters(1.0, 1.0, 1.0, [0.0; 3]);
        assert_eq!(separation_r(&f).unwrap().r, 0.0);
        let a = separation_r(&DoubleGaussianFit::from_parameters(0.0, 3.0, 1.0, [0.0; 3])).unwrap().r;
        let b = separation_r(&DoubleGaussianFit::from_parameters(0.0, 3.0, 2.0, [0.0; 3])).unwrap().r;
        assert!((a / b - 4.0).abs() < 1e-12);
    }
}
