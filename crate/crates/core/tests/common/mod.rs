//! Reference implementations used as test oracles. None of them shares code
//! with the library routes they check.

#![allow(dead_code)]

pub mod checks;

use qreadout::features::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal by Box–Muller.
pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random::<f64>().max(1e-300);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Dense square matrix stored row-major.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }
}

/// Sample covariance (n − 1 denominator) of the rows of `fm`.
pub fn covariance(fm: &FeatureMatrix) -> (Vec<f64>, Dense) {
    let (n, d) = (fm.n_rows(), fm.n_cols());
    let mut mean = vec![0.0; d];
    for r in fm.rows() {
        for k in 0..d {
            mean[k] += r[k] / n as f64;
        }
    }
    let mut c = Dense::zeros(d);
    for r in fm.rows() {
        for i in 0..d {
            for j in 0..d {
                c.a[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    (mean, c)
}

/// Cyclic Jacobi eigensolver; eigenvalues descending, eigenvectors as columns of the returned rows.
pub fn jacobi_eigen(m: &Dense) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.n;
    let mut a = m.clone();
    let mut v = Dense::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a.at(i, j).powi(2)).sum();
        let scale: f64 = (0..n).map(|i| a.at(i, i).powi(2)).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.at(k, p), a.at(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.at(p, k), a.at(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.at(y, y).total_cmp(&a.at(x, x)));
    let values = order.iter().map(|&i| a.at(i, i)).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v.at(k, i)).collect()).collect();
    (values, vectors)
}

/// Minimizes ½αᵀQα − Σα over 0 ≤ α ≤ C, yᵀα = 0 by projected gradient descent.
pub fn qp_oracle(q: &Dense, y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = q.n;
    // Lipschitz bound from the Frobenius norm
    let lip = q.a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let step = 1.0 / lip;
    let project = |v: &[f64]| -> Vec<f64> {
        let at = |mu: f64| -> (Vec<f64>, f64) {
            let a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect();
            let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
            (a, s)
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while at(lo).1 < 0.0 {
            lo *= 2.0;
        }
        while at(hi).1 > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if at(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi)).0
    };
    let objective = |a: &[f64]| -> f64 {
        let mut f = 0.0;
        for i in 0..n {
            for j in 0..n {
                f += 0.5 * a[i] * q.at(i, j) * a[j];
            }
            f -= a[i];
        }
        f
    };
    let mut alpha = vec![0.0; n];
    // accelerated projected gradient
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q.at(i, j) * z[j]).sum::<f64>() - 1.0).collect();
        let next = project(&z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>());
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&alpha).map(|(x, xo)| x + (t - 1.0) / t_next * (x - xo)).collect();
        if objective(&next) > objective(&alpha) {
            // restart momentum
            z = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        alpha = next;
    }
    let f = objective(&alpha);
    (alpha, f)
}

/// Minimum k-means objective over every assignment of the rows to `k` nonempty clusters.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let d = points[0].len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut assign = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % k;
            c /= k;
        }
        // canonical labelling only: first occurrence order 0,1,2,...
        let mut next = 0;
        let mut canonical = true;
        for &a in &assign {
            if a > next {
                canonical = false;
                break;
            }
            if a == next {
                next += 1;
            }
        }
        if !canonical || next != k {
            continue;
        }
        let mut obj = 0.0;
        for j in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
            for dim in 0..d {
                let m = members.iter().map(|p| p[dim]).sum::<f64>() / members.len() as f64;
                obj += members.iter().map(|p| (p[dim] - m).powi(2)).sum::<f64>();
            }
        }
        if obj < best.0 {
            best = (obj, assign.clone());
        }
    }
    best
}

/// Gauss–Jordan inverse and log-determinant of a small SPD matrix.
pub fn inverse_and_logdet(m: &Dense) -> (Dense, f64) {
    let n = m.n;
    let mut a = m.clone();
    let mut inv = Dense::zeros(n);
    for i in 0..n {
        inv.set(i, i, 1.0);
    }
    let mut logdet = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a.at(x, col).abs().total_cmp(&a.at(y, col).abs())).unwrap();
        if pivot != col {
            for k in 0..n {
                a.a.swap(col * n + k, pivot * n + k);
                inv.a.swap(col * n + k, pivot * n + k);
            }
        }
        let p = a.at(col, col);
        logdet += p.abs().ln();
        for k in 0..n {
            a.set(col, k, a.at(col, k) / p);
            inv.set(col, k, inv.at(col, k) / p);
        }
        for r in 0..n {
            if r != col {
                let f = a.at(r, col);
                for k in 0..n {
                    a.set(r, k, a.at(r, k) - f * a.at(col, k));
                    inv.set(r, k, inv.at(r, k) - f * inv.at(col, k));
                }
            }
        }
    }
    (inv, logdet)
}

/// log N(x; μ, Σ) evaluated directly.
pub fn log_density(x: &[f64], mean: &[f64], cov: &Dense) -> f64 {
    let (inv, logdet) = inverse_and_logdet(cov);
    let n = x.len();
    let r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += r[i] * inv.at(i, j) * r[j];
        }
    }
    -0.5 * q - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Adds, for every row, a copy whose per-bin residual from its class mean is
/// rotated by 90° in the IQ plane. The result has isotropic 2×2 sample
/// covariance in every bin and unchanged class means.
pub fn circular_symmetrize(fm: &FeatureMatrix) -> FeatureMatrix {
    let d = fm.n_cols();
    let n = d / 2;
    let mean = |label: u8| -> Vec<f64> {
        let idx = fm.class_indices(label);
        let mut m = vec![0.0; d];
        for &i in &idx {
            for (a, v) in m.iter_mut().zip(fm.row(i)) {
                *a += v / idx.len() as f64;
            }
        }
        m
    };
    let means = [mean(0), mean(1)];
    let mut rows = Vec::with_capacity(2 * fm.n_rows());
    let mut labels = Vec::with_capacity(2 * fm.n_rows());
    for (r, &l) in fm.rows().zip(fm.labels()) {
        let m = &means[l as usize];
        let mut rot = vec![0.0; d];
        for j in 0..n {
            let (re, im) = (r[j] - m[j], r[n + j] - m[n + j]);
            rot[j] = m[j] - im;
            rot[n + j] = m[n + j] + re;
        }
        rows.push(r.to_vec());
        rows.push(rot);
        labels.extend([l, l]);
    }
    FeatureMatrix::from_rows(&rows, labels).unwrap()
}

/// Two labelled Gaussian clouds in `d` dimensions with per-class covariance factors.
pub fn gaussian_classes(n_per: usize, d: usize, sep: f64, seed: u64) -> FeatureMatrix {
    let mut r = rng(seed);
    let mix0: Vec<f64> = (0..d * d).map(|_| normal(&mut r) * 0.4).collect();
    let mix1: Vec<f64> = (0..d * d).map(|_| normal(&mut r) * 0.4).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for label in 0..2u8 {
        let mix = if label == 0 { &mix0 } else { &mix1 };
        for _ in 0..n_per {
            let z: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
            let row: Vec<f64> = (0..d)
                .map(|i| {
                    let shift = if i == 0 { sep * label as f64 } else { 0.0 };
                    z[i] + (0..d).map(|j| mix[i * d + j] * z[j]).sum::<f64>() + shift
                })
                .collect();
            rows.push(row);
            labels.push(label);
        }
    }
    FeatureMatrix::from_rows(&rows, labels).unwrap()
}
