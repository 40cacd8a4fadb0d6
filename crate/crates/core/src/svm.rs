//! Soft-margin binary SVM trained with a sequential minimal optimization solver.
//!
//! The dual `min ½αᵀQα − eᵀα` subject to `yᵀα = 0`, `0 ≤ α ≤ C` is solved with
//! second-order working-set selection; kernel columns are held in an LRU cache.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

/// `k(x, z) = xᵀz` or `exp(−γ‖x − z‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, gamma: 0.0 }
    }

    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(Self { kind: KernelKind::Rbf, gamma })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }

    /// Kernel value from a dot product and the two squared norms.
    fn from_dot(&self, dot: f64, na: f64, nb: f64) -> f64 {
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Rbf => (-self.gamma * (na + nb - 2.0 * dot).max(0.0)).exp(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap; 0 selects `max(10⁷, 100·n)`.
    pub max_iter: usize,
    pub cache_bytes: usize,
}

impl SvmParams {
    pub fn new(c: f64, kernel: KernelSpec) -> Self {
        Self { c, kernel, tol: 1e-3, max_iter: 0, cache_bytes: 512 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Row-major support vectors.
    pub support_vectors: Vec<f64>,
    pub dim: usize,
    /// α_i·y_i for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    /// Primal weight vector, linear kernel only.
    pub weights: Option<Vec<f64>>,
    pub iterations: usize,
    /// Dual objective `½αᵀQα − eᵀα` at the solution.
    pub dual_objective: f64,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.coefficients.len()
    }

    pub fn support_vector(&self, k: usize) -> &[f64] {
        &self.support_vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// `Σ α_i y_i k(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if let Some(w) = &self.weights {
            return Ok(dot(w, x) + self.bias);
        }
        let s: f64 = (0..self.n_support()).map(|k| self.coefficients[k] * self.kernel.eval(self.support_vector(k), x)).sum();
        Ok(s + self.bias)
    }

    /// +1 iff the decision value is ≥ 0.
    pub fn classify(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision(x)? >= 0.0 { 1 } else { -1 })
    }

    pub fn decisions(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_dim(self.dim, fm.n_cols())?;
        (0..fm.n_rows()).into_par_iter().map(|i| self.decision(fm.row(i))).collect()
    }
}

pub fn svm_decision(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

/// Binary labels {0, 1} to SVM labels: class 0 → +1, class 1 → −1.
pub fn signed_labels(labels: &[u8]) -> Vec<i8> {
    labels.iter().map(|&l| if l == 0 { 1 } else { -1 }).collect()
}

struct KernelCache<'a> {
    x: &'a FeatureMatrix,
    order: &'a [usize],
    norms: Vec<f64>,
    kernel: KernelSpec,
    slots: Vec<Option<(Arc<Vec<f64>>, u64)>>,
    resident: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a FeatureMatrix, order: &'a [usize], kernel: KernelSpec, cache_bytes: usize) -> Self {
        let n = order.len();
        let norms = order.iter().map(|&i| dot(x.row(i), x.row(i))).collect();
        let capacity = (cache_bytes / (8 * n.max(1))).max(2);
        Self { x, order, norms, kernel, slots: vec![None; n], resident: Vec::new(), capacity, clock: 0 }
    }

    fn diag(&self, i: usize) -> f64 {
        self.kernel.from_dot(self.norms[i], self.norms[i], self.norms[i])
    }

    fn column(&mut self, i: usize) -> Arc<Vec<f64>> {
        self.clock += 1;
        if let Some((col, stamp)) = &mut self.slots[i] {
            *stamp = self.clock;
            return Arc::clone(col);
        }
        let xi = self.x.row(self.order[i]);
        let ni = self.norms[i];
        let col: Vec<f64> = (0..self.order.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|k| self.kernel.from_dot(dot(self.x.row(self.order[k]), xi), self.norms[k], ni))
            .collect();
        let col = Arc::new(col);
        if self.resident.len() >= self.capacity {
            let (pos, _) = self
                .resident
                .iter()
                .enumerate()
                .min_by_key(|(_, &r)| self.slots[r].as_ref().map_or(0, |s| s.1))
                .expect("cache is non-empty");
            let evicted = self.resident.swap_remove(pos);
            self.slots[evicted] = None;
        }
        self.slots[i] = Some((Arc::clone(&col), self.clock));
        self.resident.push(i);
        col
    }
}

/// Trains a soft-margin SVM; labels must be ±1.
///
/// Rows are sorted lexicographically before optimization so the solution does
/// not depend on the order of the training set.
pub fn fit_svm(train: &FeatureMatrix, labels: &[i8], params: &SvmParams) -> Result<SvmModel> {
    check_dim(train.n_rows(), labels.len())?;
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::invalid(format!("box constraint C must be positive, got {}", params.c)));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::invalid("SVM labels must be +1 or -1"));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::invalid("SVM training needs both labels"));
    }
    if params.kernel.kind == KernelKind::Rbf {
        KernelSpec::rbf(params.kernel.gamma)?;
    }

    let n = train.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        train
            .row(a)
            .iter()
            .zip(train.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| labels[a].cmp(&labels[b]))
    });
    let y: Vec<f64> = order.iter().map(|&i| f64::from(labels[i])).collect();
    let c = params.c;
    let max_iter = if params.max_iter == 0 { (100 * n).max(10_000_000) } else { params.max_iter };

    let mut cache = KernelCache::new(train, &order, params.kernel, params.cache_bytes);
    let qd: Vec<f64> = (0..n).map(|i| cache.diag(i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;

    let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };

    loop {
        // first index: maximal violating candidate in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        let col_i = if i_sel != usize::MAX { Some(cache.column(i_sel)) } else { None };
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = y[t] * grad[t];
            if v > gmax2 {
                gmax2 = v;
            }
            if let Some(ci) = &col_i {
                let b = gmax + v;
                if b > 0.0 {
                    let q_it = y[i_sel] * y[t] * ci[t];
                    let mut a = qd[i_sel] + qd[t] - 2.0 * y[i_sel] * q_it;
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let violation = gmax + gmax2;
        if violation < params.tol || j_sel == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations, violation });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let ci = col_i.expect("first index selected");
        let cj = cache.column(j);
        let q_ij = y[i] * y[j] * ci[j];
        let (old_ai, old_aj) = (alpha[i], alpha[j]);

        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        let (yi, yj) = (y[i], y[j]);
        grad.par_iter_mut().with_min_len(1024).enumerate().for_each(|(k, g)| {
            *g += y[k] * (yi * ci[k] * dai + yj * cj[k] * daj);
        });
    }

    // bias from free support vectors, or the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { 0.5 * (ub + lb) };

    let dual_objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] - 1.0)).sum::<f64>();

    let dim = train.n_cols();
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    let mut support_indices = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.extend_from_slice(train.row(order[t]));
            coefficients.push(alpha[t] * y[t]);
            support_indices.push(order[t]);
        }
    }
    let weights = (params.kernel.kind == KernelKind::Linear).then(|| {
        let mut w = vec![0.0; dim];
        for (k, coef) in coefficients.iter().enumerate() {
            for (wi, xi) in w.iter_mut().zip(&support_vectors[k * dim..(k + 1) * dim]) {
                *wi += coef * xi;
            }
        }
        w
    });
    Ok(SvmModel {
        support_vectors,
        dim,
        coefficients,
        bias: -rho,
        kernel: params.kernel,
        c,
        support_indices,
        weights,
        iterations,
        dual_objective,
    })
}

/// γ = 1 / median pairwise squared distance over a seeded subsample of at most `max_rows` rows.
pub fn median_gamma(fm: &FeatureMatrix, max_rows: usize, seed: u64) -> Result<f64> {
    let mut idx: Vec<usize> = (0..fm.n_rows()).collect();
    if idx.len() > max_rows {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(max_rows);
        idx.sort_unstable();
    }
    let mut d2: Vec<f64> = (0..idx.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let ra = fm.row(idx[a]);
            idx[a + 1..].iter().map(move |&b| ra.iter().zip(fm.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        })
        .filter(|&v| v > 0.0)
        .collect();
    if d2.is_empty() {
        return Err(Error::invalid("all rows coincide; median distance undefined"));
    }
    let mid = d2.len() / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(1.0 / *median)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[i8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::Stratification { fold: idx.len(), class });
        }
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub c: f64,
    pub gamma: f64,
    pub cv_error: f64,
    /// (C, γ, mean held-out error) for every grid point, in search order.
    pub table: Vec<(f64, f64, f64)>,
}

fn dedup_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Grid search by stratified k-fold cross-validation.
///
/// Ties go to the smaller C, then the smaller γ. `gamma_grid` is ignored for
/// the linear kernel.
pub fn cross_validate(
    train: &FeatureMatrix,
    labels: &[i8],
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
    base: &SvmParams,
) -> Result<CvResult> {
    check_dim(train.n_rows(), labels.len())?;
    let cs = dedup_sorted(c_grid);
    let gammas = if base.kernel.kind == KernelKind::Linear { vec![0.0] } else { dedup_sorted(gamma_grid) };
    if cs.is_empty() || gammas.is_empty() {
        return Err(Error::invalid("hyperparameter grids must be nonempty"));
    }
    let assign = stratified_folds(labels, folds, seed)?;
    let splits: Vec<(FeatureMatrix, Vec<i8>, FeatureMatrix, Vec<i8>)> = (0..folds)
        .map(|f| {
            let tr: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
            let te: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
            (
                train.subset(&tr),
                tr.iter().map(|&i| labels[i]).collect(),
                train.subset(&te),
                te.iter().map(|&i| labels[i]).collect(),
            )
        })
        .collect();

    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for &c in &cs {
        for &g in &gammas {
            let mut params = *base;
            params.c = c;
            if base.kernel.kind == KernelKind::Rbf {
                params.kernel = KernelSpec::rbf(g)?;
            }
            let errors: Vec<f64> = splits
                .par_iter()
                .map(|(xtr, ytr, xte, yte)| {
                    let m = fit_svm(xtr, ytr, &params)?;
                    let wrong = m.decisions(xte)?.iter().zip(yte).filter(|(d, &y)| (if **d >= 0.0 { 1 } else { -1 }) != y).count();
                    Ok(wrong as f64 / yte.len() as f64)
                })
                .collect::<Result<_>>()?;
            let err = errors.iter().sum::<f64>() / folds as f64;
            table.push((c, g, err));
            if best.is_none_or(|(_, _, e)| err < e) {
                best = Some((c, g, err));
            }
        }
    }
    let (c, gamma, cv_error) = best.expect("grid nonempty");
    Ok(CvResult { c, gamma, cv_error, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, vec![0; rows.len()]).unwrap()
    }

    #[test]
    fn two_point_hard_margin() {
        let x = fm(&[vec![-1.0], vec![1.0]]);
        let m = fit_svm(&x, &[-1, 1], &SvmParams::new(100.0, KernelSpec::linear())).unwrap();
        assert!((m.decision(&[0.0]).unwrap()).abs() < 1e-9);
        assert!((m.decision(&[1.0]).unwrap() - 1.0).abs() < 1e-9);
        assert!((m.weights.as_ref().unwrap()[0] - 1.0).abs() < 1e-9);
        assert_eq!(m.n_support(), 2);
    }

    #[test]
    fn xor_needs_rbf() {
        let x = fm(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let y = [-1, -1, 1, 1];
        let rbf = fit_svm(&x, &y, &SvmParams::new(100.0, KernelSpec::rbf(1.0).unwrap())).unwrap();
        for i in 0..4 {
            assert_eq!(rbf.classify(x.row(i)).unwrap(), y[i]);
        }
        let lin = fit_svm(&x, &y, &SvmParams::new(100.0, KernelSpec::linear())).unwrap();
        let correct = (0..4).filter(|&i| lin.classify(x.row(i)).unwrap() == y[i]).count();
        assert!(correct <= 3);
    }

    #[test]
    fn rbf_far_field_is_bias() {
        let x = fm(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let m = fit_svm(&x, &[-1, -1, 1, 1], &SvmParams::new(10.0, KernelSpec::rbf(1.0).unwrap())).unwrap();
        assert!((m.decision(&[1e3]).unwrap() - m.bias).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let x = fm(&[vec![0.0], vec![1.0]]);
        assert!(fit_svm(&x, &[1, 1], &SvmParams::new(1.0, KernelSpec::linear())).is_err());
        assert!(fit_svm(&x, &[1, -1], &SvmParams::new(0.0, KernelSpec::linear())).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
    }

    #[test]
    fn tiny_iteration_cap_reports_violation() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let y: Vec<i8> = (0..40).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let mut p = SvmParams::new(10.0, KernelSpec::rbf(1.0).unwrap());
        p.max_iter = 1;
        assert!(matches!(fit_svm(&fm(&rows), &y, &p), Err(Error::Convergence { .. })));
    }

    #[test]
    fn fold_missing_class() {
        assert!(matches!(stratified_folds(&[1, 1, 1, -1], 2, 0), Err(Error::Stratification { class: -1, .. })));
    }

    #[test]
    fn duplicated_grid_same_result() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0, ((i * 7) % 5) as f64 / 5.0]).collect();
        let y: Vec<i8> = (0..40).map(|i| if i < 20 { -1 } else { 1 }).collect();
        let x = fm(&rows);
        let base = SvmParams::new(1.0, KernelSpec::rbf(1.0).unwrap());
        let a = cross_validate(&x, &y, &[1.0, 10.0], &[0.5, 1.0], 4, 3, &base).unwrap();
        let b = cross_validate(&x, &y, &[10.0, 1.0, 1.0, 10.0], &[1.0, 0.5, 0.5], 4, 3, &base).unwrap();
        assert_eq!((a.c, a.gamma, a.cv_error), (b.c, b.gamma, b.cv_error));
        assert_eq!(a.cv_error, 0.0);
    }
}
