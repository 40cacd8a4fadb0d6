//! Oracle comparisons shared by the oracle tests and the acceptance run.
//! Each returns the worst discrepancy it saw.

use nalgebra::{DMatrix, DVector};
use qreadout::cluster::{kmeans, kmeans_from, kmeans_objective, KMeansInit};
use qreadout::discriminant::{fit_gaussian, Variant};
use qreadout::ensemble::{fit_multiclass, MultiClassKind, MultiClassParams};
use qreadout::features::{fit_pca, FeatureMatrix};
use qreadout::svm::{fit_svm, KernelSpec, SvmModel, SvmParams};

use super::*;

/// Largest eigenvalue (relative) or eigenvector (1 − |cos|) discrepancy between PCA and Jacobi.
pub fn pca_vs_jacobi(seed: u64, n: usize, d: usize) -> f64 {
    let mut r = rng(seed);
    let scales: Vec<f64> = (0..d).map(|k| 1.0 + 3.0 * k as f64).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|k| normal(&mut r) * scales[k]).collect();
            // mix neighbouring coordinates so the eigenvectors are not axis-aligned
            (0..d).map(|k| z[k] + 0.5 * z[(k + 1) % d]).collect()
        })
        .collect();
    let fm = FeatureMatrix::from_rows(&rows, vec![0; n]).unwrap();
    let pca = fit_pca(&fm, 1.0).unwrap();
    let (_, cov) = covariance(&fm);
    let (values, vectors) = jacobi_eigen(&cov);
    let mut worst = 0.0f64;
    for k in 0..d {
        worst = worst.max((pca.eigenvalues[k] - values[k]).abs() / values[0]);
        let dotp: f64 = (0..d).map(|i| pca.components[(i, k)] * vectors[k][i]).sum();
        worst = worst.max(1.0 - dotp.abs());
    }
    worst
}

/// |SMO dual objective − QP oracle optimum| on a random 20-point instance.
pub fn svm_vs_qp(seed: u64, kernel: KernelSpec, c: f64, separable: bool) -> f64 {
    let mut r = rng(seed);
    let n = 20;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let offset = if separable { 2.5 } else { 0.6 };
        rows.push(vec![normal(&mut r) * 0.7 + offset * f64::from(label), normal(&mut r) * 0.7]);
        y.push(label);
    }
    let fm = FeatureMatrix::from_rows(&rows, vec![0; n]).unwrap();
    let params = SvmParams { tol: 1e-10, ..SvmParams::new(c, kernel) };
    let model = fit_svm(&fm, &y, &params).unwrap();
    let mut q = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            q.set(i, j, f64::from(y[i]) * f64::from(y[j]) * kernel.eval(&rows[i], &rows[j]));
        }
    }
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let (_, best) = qp_oracle(&q, &yf, c, 200_000);
    (model.dual_objective - best).abs()
}

/// Three loose blobs of `n` points in 2-D.
pub fn small_blobs(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let centres = [[0.0, 0.0], [3.0, 0.5], [1.0, 3.0]];
    (0..n).map(|i| {
        let c = centres[i % 3];
        vec![c[0] + normal(&mut r), c[1] + normal(&mut r)]
    })
    .collect()
}

/// Returns (objective gap to the exhaustive optimum, fixed-point violation).
///
/// The gap uses the best of ten seeded runs; the violation counts points not
/// assigned to their nearest mean plus mean/centroid mismatches over every run,
/// and whether Lloyd started at the optimal centroids leaves them in place.
pub fn kmeans_vs_exhaustive(seed: u64, n: usize, k: usize) -> (f64, f64) {
    let pts = small_blobs(seed, n);
    let fm = FeatureMatrix::from_rows(&pts, vec![0; n]).unwrap();
    let (opt, opt_assign) = exhaustive_kmeans(&pts, k);
    let mut best = f64::INFINITY;
    let mut violation = 0.0f64;
    let centroid = |assign: &[usize], j: usize| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = pts.iter().zip(assign).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
        (0..2).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect()
    };
    for s in 0..10 {
        let c = kmeans(&fm, k, KMeansInit::SeededRandom, 100, seed * 100 + s).unwrap();
        best = best.min(c.objective);
        for (i, p) in pts.iter().enumerate() {
            let d = |m: &Vec<f64>| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
            let own = d(&c.cluster_means[c.assignments[i]]);
            if c.cluster_means.iter().any(|m| d(m) < own - 1e-12) {
                violation += 1.0;
            }
        }
        for j in 0..k {
            let m = centroid(&c.assignments, j);
            violation += (m[0] - c.cluster_means[j][0]).abs() + (m[1] - c.cluster_means[j][1]).abs();
        }
    }
    let optimal_means: Vec<Vec<f64>> = (0..k).map(|j| centroid(&opt_assign, j)).collect();
    let again = kmeans_from(&fm, optimal_means.clone(), 100).unwrap();
    violation += (kmeans_objective(&fm, &again.assignments, &again.cluster_means) - opt).abs();
    (best - opt, violation)
}

/// Number of QDA decisions that disagree with the direct log-density oracle,
/// and the largest covariance discrepancy against an independent estimate.
pub fn qda_vs_density(seed: u64) -> (usize, f64) {
    let fm = gaussian_classes(80, 3, 1.2, seed);
    let model = fit_gaussian(&fm, Variant::Qda, 0.0).unwrap();
    let c0 = covariance(&fm.subset(&fm.class_indices(0)));
    let c1 = covariance(&fm.subset(&fm.class_indices(1)));
    let mut cov_err = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            cov_err = cov_err.max((model.cov0.matrix[(i, j)] - c0.1.at(i, j)).abs());
            cov_err = cov_err.max((model.cov1.matrix[(i, j)] - c1.1.at(i, j)).abs());
        }
    }
    let mut r = rng(seed ^ 0xabc);
    let mut mismatches = 0;
    for _ in 0..500 {
        let x: Vec<f64> = (0..3).map(|_| normal(&mut r) * 2.0 + 0.6).collect();
        let lr = (log_density(&x, &c0.0, &c0.1) + model.prior0.ln()) - (log_density(&x, &c1.0, &c1.1) + model.prior1.ln());
        if lr.abs() < 1e-9 {
            continue;
        }
        let oracle = if lr > 0.0 { 0 } else { 1 };
        if model.classify(&x).unwrap() != oracle {
            mismatches += 1;
        }
    }
    (mismatches, cov_err)
}

/// Disagreements between multi-class LDA and a brute-force density argmax.
pub fn multi_lda_vs_argmax(seed: u64) -> usize {
    let mut r = rng(seed);
    let centres = [[0.0, 0.0, 0.0], [1.5, 0.0, 0.5], [0.0, 1.5, -0.5]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..40 {
            rows.push(centre.iter().map(|m| m + normal(&mut r)).collect::<Vec<f64>>());
            labels.push(c as u8);
        }
    }
    let fm = FeatureMatrix::from_rows(&rows, labels.clone()).unwrap();
    let model = fit_multiclass(&fm, MultiClassKind::MultiLda, &MultiClassParams::default(), 0).unwrap();
    let means: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let idx = fm.class_indices(c as u8);
            (0..3).map(|d| idx.iter().map(|&i| rows[i][d]).sum::<f64>() / idx.len() as f64).collect()
        })
        .collect();
    let mut pooled = Dense::zeros(3);
    for (row, &l) in rows.iter().zip(&labels) {
        for i in 0..3 {
            for j in 0..3 {
                let v = pooled.at(i, j) + (row[i] - means[l as usize][i]) * (row[j] - means[l as usize][j]) / (rows.len() - 3) as f64;
                pooled.set(i, j, v);
            }
        }
    }
    let mut mismatches = 0;
    for _ in 0..500 {
        let x: Vec<f64> = (0..3).map(|_| normal(&mut r) * 1.5 + 0.5).collect();
        let dens: Vec<f64> = means.iter().map(|m| log_density(&x, m, &pooled)).collect();
        let mut best = 0;
        for c in 1..3 {
            if dens[c] > dens[best] {
                best = c;
            }
        }
        let mut sorted = dens.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted[0] - sorted[1] < 1e-9 {
            continue;
        }
        if model.predict(&x).unwrap() as usize != best {
            mismatches += 1;
        }
    }
    mismatches
}

/// Max KKT violation of a trained model on its training set, in units of y·f(x).
pub fn kkt_violation(model: &SvmModel, rows: &[Vec<f64>], y: &[i8]) -> f64 {
    let mut alpha = vec![0.0; rows.len()];
    for (k, &i) in model.support_indices.iter().enumerate() {
        alpha[i] = model.coefficients[k].abs();
    }
    let mut worst = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        let yf = f64::from(y[i]) * model.decision(row).unwrap();
        let v = if alpha[i] <= 0.0 {
            (1.0 - yf).max(0.0)
        } else if alpha[i] >= model.c {
            (yf - 1.0).max(0.0)
        } else {
            (yf - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimum eigenvalue of a symmetric matrix by the Jacobi oracle.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut d = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            d.set(i, j, m[(i, j)]);
        }
    }
    jacobi_eigen(&d).0.last().copied().unwrap_or(0.0)
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
