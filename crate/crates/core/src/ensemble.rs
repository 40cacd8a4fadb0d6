//! Multi-class classifiers over {C0, C1, C2}: pooled-covariance Gaussian,
//! one-vs-rest SVM and RUSBoost with decision stumps.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discriminant::{shrink_toward_diagonal, SpdMatrix};
use crate::error::{check_dim, Error, Result};
use crate::features::{mean_and_scatter, FeatureMatrix};
use crate::svm::{fit_svm, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiClassKind {
    MultiLda,
    MultiSvm,
    Rusboost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiClassParams {
    pub svm: SvmParams,
    pub rounds: usize,
}

impl Default for MultiClassParams {
    fn default() -> Self {
        Self { svm: SvmParams::new(1.0, crate::svm::KernelSpec::linear()), rounds: 50 }
    }
}

/// Depth-one tree: `x[feature] ≤ threshold` → `left`, otherwise `right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: u8,
    pub right: u8,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> u8 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MultiClassModel {
    /// Log priors come from class counts, as in the binary discriminants.
    MultiLda { means: Vec<DVector<f64>>, log_priors: Vec<f64>, covariance: SpdMatrix, shrinkage: f64 },
    /// One machine per class; with two classes a single machine serves both (second decision negated).
    MultiSvm { machines: Vec<SvmModel>, n_classes: usize },
    Rusboost { stumps: Vec<Stump>, weights: Vec<f64>, n_classes: usize },
}

fn class_count(labels: &[u8]) -> Result<usize> {
    let k = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    if k < 2 {
        return Err(Error::invalid("multi-class training needs at least two classes"));
    }
    for c in 0..k {
        let n = labels.iter().filter(|&&l| l as usize == c).count();
        if n < 2 {
            return Err(Error::invalid(format!("class {c} has {n} rows; at least 2 are required")));
        }
    }
    Ok(k)
}

/// Labels must be `0..K` with every class present at least twice.
pub fn fit_multiclass(train: &FeatureMatrix, kind: MultiClassKind, params: &MultiClassParams, seed: u64) -> Result<MultiClassModel> {
    let k = class_count(train.labels())?;
    match kind {
        MultiClassKind::MultiLda => fit_multi_lda(train, k),
        MultiClassKind::MultiSvm => {
            let machines = if k == 2 {
                let y: Vec<i8> = train.labels().iter().map(|&l| if l == 0 { 1 } else { -1 }).collect();
                vec![fit_svm(train, &y, &params.svm)?]
            } else {
                (0..k)
                    .into_par_iter()
                    .map(|c| {
                        let y: Vec<i8> = train.labels().iter().map(|&l| if l as usize == c { 1 } else { -1 }).collect();
                        fit_svm(train, &y, &params.svm)
                    })
                    .collect::<Result<_>>()?
            };
            Ok(MultiClassModel::MultiSvm { machines, n_classes: k })
        }
        MultiClassKind::Rusboost => fit_rusboost(train, k, params.rounds, seed),
    }
}

fn fit_multi_lda(train: &FeatureMatrix, k: usize) -> Result<MultiClassModel> {
    let d = train.n_cols();
    let mut means = Vec::with_capacity(k);
    let mut log_priors = Vec::with_capacity(k);
    let mut scatter = nalgebra::DMatrix::zeros(d, d);
    for c in 0..k {
        let idx = train.class_indices(c as u8);
        let (m, s) = mean_and_scatter(train, &idx);
        means.push(m);
        log_priors.push((idx.len() as f64 / train.n_rows() as f64).ln());
        scatter += s;
    }
    let pooled = scatter / (train.n_rows() - k) as f64;
    let mut last = None;
    for lambda in std::iter::once(0.0).chain((0..13).map(|e| 10f64.powi(e - 12))) {
        match SpdMatrix::new(shrink_toward_diagonal(&pooled, lambda)) {
            Ok(covariance) => return Ok(MultiClassModel::MultiLda { means, log_priors, covariance, shrinkage: lambda }),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("ladder nonempty"))
}

fn argmax_low(values: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best as u8
}

/// Weighted stump minimizing misclassified weight on the given rows.
fn fit_stump(train: &FeatureMatrix, rows: &[usize], weights: &[f64], k: usize) -> Stump {
    let d = train.n_cols();
    let total: Vec<f64> = (0..k)
        .map(|c| rows.iter().zip(weights).filter(|(&r, _)| train.labels()[r] as usize == c).map(|(_, w)| w).sum())
        .collect();
    let candidates: Vec<(f64, Stump)> = (0..d)
        .into_par_iter()
        .map(|f| {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| train.row(rows[a])[f].total_cmp(&train.row(rows[b])[f]));
            let mut left = vec![0.0; k];
            let mut best = (f64::INFINITY, Stump { feature: f, threshold: f64::INFINITY, left: 0, right: 0 });
            // a run of consecutive equal-error splits puts the threshold at its middle
            let (mut run_hi, mut extending) = (f64::INFINITY, false);
            for w in 0..order.len() {
                let r = rows[order[w]];
                left[train.labels()[r] as usize] += weights[order[w]];
                let v = train.row(r)[f];
                let thr = match order.get(w + 1).map(|&o| train.row(rows[o])[f]) {
                    Some(nv) if nv > v => 0.5 * (v + nv),
                    Some(_) => continue,
                    None => f64::INFINITY,
                };
                let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let (lc, rc) = (argmax_low(&left), argmax_low(&right));
                let err = total.iter().sum::<f64>() - left[lc as usize] - right[rc as usize];
                let tie = (err - best.0).abs() <= 1e-12 && (lc, rc) == (best.1.left, best.1.right);
                if err < best.0 && !tie {
                    best = (err, Stump { feature: f, threshold: thr, left: lc, right: rc });
                    (run_hi, extending) = (thr, true);
                } else if tie && extending && thr.is_finite() {
                    run_hi = thr;
                } else {
                    extending = false;
                }
            }
            if best.1.threshold.is_finite() && run_hi.is_finite() {
                best.1.threshold = 0.5 * (best.1.threshold + run_hi);
            }
            best
        })
        .collect();
    candidates
        .into_iter()
        .fold(None::<(f64, Stump)>, |acc, c| match acc {
            Some(a) if a.0 <= c.0 => Some(a),
            _ => Some(c),
        })
        .expect("at least one feature")
        .1
}

fn fit_rusboost(train: &FeatureMatrix, k: usize, rounds: usize, seed: u64) -> Result<MultiClassModel> {
    if rounds == 0 {
        return Err(Error::invalid("boosting needs at least one round"));
    }
    let n = train.n_rows();
    let labels = train.labels();
    let by_class: Vec<Vec<usize>> = (0..k).map(|c| train.class_indices(c as u8)).collect();
    let minority = by_class.iter().map(Vec::len).min().expect("k ≥ 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // class-balanced start: every class carries mass 1/K
    let mut w: Vec<f64> = labels.iter().map(|&l| 1.0 / (k * by_class[l as usize].len()) as f64).collect();
    let mut stumps = Vec::new();
    let mut alphas = Vec::new();
    let kf = k as f64;

    for _ in 0..rounds {
        let mut sample = Vec::with_capacity(minority * k);
        for idx in &by_class {
            let mut pick = idx.clone();
            pick.shuffle(&mut rng);
            pick.truncate(minority);
            sample.extend(pick);
        }
        sample.sort_unstable();
        // each kept row stands in for n_c / minority rows of its class
        let sw: Vec<f64> = sample.iter().map(|&i| w[i] * by_class[labels[i] as usize].len() as f64).collect();
        let norm: f64 = sw.iter().sum();
        let sw: Vec<f64> = sw.iter().map(|v| v / norm).collect();
        let stump = fit_stump(train, &sample, &sw, k);

        let wrong: Vec<bool> = (0..n).map(|i| stump.predict(train.row(i)) != labels[i]).collect();
        let err: f64 = (0..n).filter(|&i| wrong[i]).map(|i| w[i]).sum();
        if err >= 1.0 - 1.0 / kf {
            continue;
        }
        let alpha = ((1.0 - err).max(1e-300) / err.max(1e-12)).ln() + (kf - 1.0).ln();
        for i in 0..n {
            if wrong[i] {
                w[i] *= alpha.exp();
            }
        }
        stumps.push(stump);
        alphas.push(alpha);
        if err == 0.0 {
            break;
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    if stumps.is_empty() {
        // no round beat chance; keep one unweighted stump so prediction is defined
        let all: Vec<usize> = (0..n).collect();
        stumps.push(fit_stump(train, &all, &vec![1.0 / n as f64; n], k));
        alphas.push(1.0);
    }
    Ok(MultiClassModel::Rusboost { stumps, weights: alphas, n_classes: k })
}

impl MultiClassModel {
    pub fn n_classes(&self) -> usize {
        match self {
            MultiClassModel::MultiLda { means, .. } => means.len(),
            MultiClassModel::MultiSvm { n_classes, .. } | MultiClassModel::Rusboost { n_classes, .. } => *n_classes,
        }
    }

    /// Per-class scores; the prediction is their argmax.
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            MultiClassModel::MultiLda { means, log_priors, covariance, .. } => {
                check_dim(means[0].len(), x.len())?;
                let x = DVector::from_column_slice(x);
                Ok(means.iter().zip(log_priors).map(|(m, lp)| lp - 0.5 * covariance.inv_quad(&(&x - m))).collect())
            }
            MultiClassModel::MultiSvm { machines, n_classes } => {
                if *n_classes == 2 {
                    let d = machines[0].decision(x)?;
                    Ok(vec![d, -d])
                } else {
                    machines.iter().map(|m| m.decision(x)).collect()
                }
            }
            MultiClassModel::Rusboost { stumps, weights, n_classes } => {
                if let Some(s) = stumps.first() {
                    if s.feature >= x.len() {
                        return Err(Error::DimensionMismatch { expected: s.feature + 1, got: x.len() });
                    }
                }
                let mut votes = vec![0.0; *n_classes];
                for (s, a) in stumps.iter().zip(weights) {
                    votes[s.predict(x) as usize] += a;
                }
                Ok(votes)
            }
        }
    }

    /// Argmax of the class scores; ties go to the lower class index.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(argmax_low(&self.class_scores(x)?))
    }

    pub fn predict_all(&self, fm: &FeatureMatrix) -> Result<Vec<u8>> {
        (0..fm.n_rows()).into_par_iter().map(|i| self.predict(fm.row(i))).collect()
    }
}

pub fn predict_multiclass(model: &MultiClassModel, x: &[f64]) -> Result<u8> {
    model.predict(x)
}

/// Maps multi-class predictions to binary outcomes through `mapping[class]`.
pub fn collapse_to_binary(predictions: &[u8], mapping: &[u8]) -> Result<Vec<u8>> {
    predictions
        .iter()
        .map(|&p| mapping.get(p as usize).copied().ok_or(Error::UnknownLabel(p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_mapping() {
        let map = [0, 1, 1];
        assert_eq!(collapse_to_binary(&[0, 1, 2], &map).unwrap(), vec![0, 1, 1]);
        assert_eq!(collapse_to_binary(&[0, 0], &map).unwrap(), vec![0, 0]);
        assert!(matches!(collapse_to_binary(&[3], &map), Err(Error::UnknownLabel(3))));
    }

    #[test]
    fn missing_class_rejected() {
        let fm = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0, 0, 2]).unwrap();
        assert!(fit_multiclass(&fm, MultiClassKind::MultiLda, &MultiClassParams::default(), 0).is_err());
    }

    #[test]
    fn single_round_predicts_stump_vote() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 4) as f64]).collect();
        let labels: Vec<u8> = (0..30).map(|i| (i / 10) as u8).collect();
        let fm = FeatureMatrix::from_rows(&rows, labels).unwrap();
        let params = MultiClassParams { rounds: 1, ..Default::default() };
        let m = fit_multiclass(&fm, MultiClassKind::Rusboost, &params, 4).unwrap();
        let MultiClassModel::Rusboost { stumps, .. } = &m else { panic!() };
        assert_eq!(stumps.len(), 1);
        for r in &rows {
            assert_eq!(m.predict(r).unwrap(), stumps[0].predict(r));
        }
    }
}
