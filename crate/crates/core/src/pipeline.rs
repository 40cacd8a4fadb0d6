//! Classifier recipes: preprocessing, training and scoring of every method on
//! a positional train/test split, plus the measurement-time sweep and the
//! T1 diagnosis built on clustering.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    empirical_references, identify_special_clusters, kmeans, lift_to_multiclass, subclass_report, Clustering,
    KMeansInit, SubclassReport, DEFAULT_LATE_WINDOW,
};
use crate::discriminant::{fit_gaussian, Variant};
use crate::ensemble::{collapse_to_binary, fit_multiclass, MultiClassKind, MultiClassParams};
use crate::error::{Error, Result};
use crate::features::{fit_pca, vectorize, FeatureMatrix, MatchedFilterClassifier};
use crate::metrics::{assignment_fidelity, FidelityReport};
use crate::sim::Dataset;
use crate::svm::{cross_validate, fit_svm, median_gamma, signed_labels, KernelKind, KernelSpec, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ldad")]
    Ldad,
    #[serde(rename = "lda")]
    Lda,
    #[serde(rename = "qdad")]
    Qdad,
    #[serde(rename = "qda")]
    Qda,
    #[serde(rename = "svm-linear")]
    SvmLinear,
    #[serde(rename = "svm-rbf")]
    SvmRbf,
    #[serde(rename = "multi-lda")]
    MultiLda,
    #[serde(rename = "multi-svm")]
    MultiSvm,
    #[serde(rename = "rusboost")]
    Rusboost,
    #[serde(rename = "matched-filter")]
    MatchedFilter,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Ldad,
        Method::Lda,
        Method::Qdad,
        Method::Qda,
        Method::SvmLinear,
        Method::SvmRbf,
        Method::MultiLda,
        Method::MultiSvm,
        Method::Rusboost,
        Method::MatchedFilter,
    ];

    /// Binary methods (everything except the three-class ones).
    pub const BINARY: [Method; 7] = [
        Method::Ldad,
        Method::Lda,
        Method::Qdad,
        Method::Qda,
        Method::SvmLinear,
        Method::SvmRbf,
        Method::MatchedFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ldad => "ldad",
            Method::Lda => "lda",
            Method::Qdad => "qdad",
            Method::Qda => "qda",
            Method::SvmLinear => "svm-linear",
            Method::SvmRbf => "svm-rbf",
            Method::MultiLda => "multi-lda",
            Method::MultiSvm => "multi-svm",
            Method::Rusboost => "rusboost",
            Method::MatchedFilter => "matched-filter",
        }
    }

    pub fn is_multiclass(self) -> bool {
        matches!(self, Method::MultiLda | Method::MultiSvm | Method::Rusboost)
    }

    fn variant(self) -> Option<Variant> {
        match self {
            Method::Ldad => Some(Variant::Ldad),
            Method::Lda => Some(Variant::Lda),
            Method::Qdad => Some(Variant::Qdad),
            Method::Qda => Some(Variant::Qda),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::invalid(format!("unknown method '{s}'; valid methods: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmSettings {
    /// Fixed C; `None` selects it by cross-validation over `c_grid`.
    pub c: Option<f64>,
    /// Fixed multiple of the median-heuristic γ; `None` selects it over `gamma_scales`.
    pub gamma_scale: Option<f64>,
    pub c_grid: Vec<f64>,
    pub gamma_scales: Vec<f64>,
    pub folds: usize,
    pub tol: f64,
    /// Rows used for the median-distance heuristic.
    pub median_rows: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            c: None,
            gamma_scale: None,
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_scales: vec![0.25, 1.0, 4.0],
            folds: 10,
            tol: 1e-3,
            median_rows: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Recipe {
    pub method: Method,
    /// PCA variance fraction; `None` keeps the full vectors. Ignored by the matched filter.
    pub pca_fraction: Option<f64>,
    pub shrinkage: f64,
    pub svm: SvmSettings,
    /// Clusters of the excited class used to lift the T1 subclass for multi-class methods.
    pub kmeans_k: usize,
    pub kmeans_realizations: usize,
    pub boost_rounds: usize,
    pub seed: u64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self {
            method: Method::Lda,
            pca_fraction: None,
            shrinkage: 0.0,
            svm: SvmSettings::default(),
            kmeans_k: 3,
            kmeans_realizations: 10,
            boost_rounds: 50,
            seed: 0,
        }
    }
}

impl Recipe {
    pub fn new(method: Method) -> Self {
        Self { method, ..Default::default() }
    }

    pub fn with_pca(mut self, fraction: f64) -> Self {
        self.pca_fraction = Some(fraction);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub pca_dim: Option<usize>,
    pub report: FidelityReport,
    pub predictions: Vec<u8>,
    /// Hyperparameters and adjustments made during training.
    pub notes: Vec<String>,
}

/// Positional split: the first half of each class's shots (in row order) trains.
///
/// With `shuffle = Some(seed)` each class is shuffled before halving.
pub fn split_half(labels: &[u8], shuffle: Option<u64>) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut rng = shuffle.map(ChaCha8Rng::seed_from_u64);
    for class in 0..=labels.iter().copied().max().unwrap_or(0) {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if let Some(rng) = rng.as_mut() {
            idx.shuffle(rng);
        }
        let half = idx.len() / 2;
        train.extend_from_slice(&idx[..half]);
        test.extend_from_slice(&idx[half..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Root-mean-square row norm; SVM inputs are divided by it so that K(x, x) ≈ 1 on average.
fn rms_norm(fm: &FeatureMatrix) -> f64 {
    let s = fm.as_slice();
    (s.iter().map(|v| v * v).sum::<f64>() / fm.n_rows() as f64).sqrt()
}

/// Labels of `train` with the excited-class T1 cluster lifted to class 2.
fn lifted_training_labels(train: &FeatureMatrix, recipe: &Recipe, notes: &mut Vec<String>) -> Result<Vec<u8>> {
    let excited = train.class_indices(1);
    let rows = train.subset(&excited);
    let init = KMeansInit::Stabilized { realizations: recipe.kmeans_realizations.max(1) };
    let clustering = kmeans(&rows, recipe.kmeans_k, init, 300, recipe.seed)?;
    let report = subclass_report(&clustering, &rows, 1)?;
    let (g, e) = empirical_references(train)?;
    let flagged = identify_special_clusters(&report, &g, &e, DEFAULT_LATE_WINDOW)?;
    let t1 = flagged.t1_clusters();
    let lifted = match t1.first() {
        Some(&id) if clustering.sizes()[id] >= 2 => {
            notes.push(format!("lifted T1 cluster of {} shots", clustering.sizes()[id]));
            lift_to_multiclass(train.labels(), &excited, &clustering, Some(id))?
        }
        _ => {
            notes.push("no T1 cluster found; training on two classes".into());
            lift_to_multiclass(train.labels(), &excited, &clustering, None)?
        }
    };
    Ok(lifted.labels)
}

/// Trains `recipe` on `train` and scores it on `test`. `dt` is the bin width
/// used by the matched filter.
pub fn evaluate(train: &FeatureMatrix, test: &FeatureMatrix, recipe: &Recipe, dt: f64) -> Result<MethodOutcome> {
    let mut notes = Vec::new();
    if recipe.method == Method::MatchedFilter {
        let mf = MatchedFilterClassifier::fit(train, dt)?;
        let predictions = mf.predict(test)?;
        let report = assignment_fidelity(&predictions, test.labels())?;
        return Ok(MethodOutcome { method: recipe.method, pca_dim: None, report, predictions, notes });
    }

    let train_labels = if recipe.method.is_multiclass() {
        Some(lifted_training_labels(train, recipe, &mut notes)?)
    } else {
        None
    };

    let (xtr, xte, pca_dim) = match recipe.pca_fraction {
        Some(f) => {
            let pca = fit_pca(train, f)?;
            notes.push(format!("pca dimension {}", pca.output_dim()));
            (pca.project_matrix(train)?, pca.project_matrix(test)?, Some(pca.output_dim()))
        }
        None => (train.clone(), test.clone(), None),
    };

    let predictions = match recipe.method {
        m if m.variant().is_some() => {
            let model = fit_gaussian(&xtr, m.variant().expect("checked"), recipe.shrinkage)?;
            if model.shrinkage != recipe.shrinkage {
                notes.push(format!("shrinkage raised to {:e}", model.shrinkage));
            }
            model.predict(&xte)?
        }
        Method::SvmLinear | Method::SvmRbf => {
            let kind = if recipe.method == Method::SvmLinear { KernelKind::Linear } else { KernelKind::Rbf };
            let (params, scale) = tune_svm(&xtr, kind, &recipe.svm, recipe.seed, &mut notes)?;
            let model = fit_svm(&xtr.scaled(scale), &signed_labels(xtr.labels()), &params)?;
            notes.push(format!("support vectors {} after {} iterations", model.n_support(), model.iterations));
            model
                .decisions(&xte.scaled(scale))?
                .into_iter()
                .map(|d| if d >= 0.0 { 0 } else { 1 })
                .collect()
        }
        Method::MultiLda | Method::MultiSvm | Method::Rusboost => {
            let labels = train_labels.expect("lifted above");
            let kind = match recipe.method {
                Method::MultiLda => MultiClassKind::MultiLda,
                Method::MultiSvm => MultiClassKind::MultiSvm,
                _ => MultiClassKind::Rusboost,
            };
            let scale = if kind == MultiClassKind::MultiSvm { 1.0 / rms_norm(&xtr) } else { 1.0 };
            let svm = SvmParams { tol: recipe.svm.tol, ..SvmParams::new(recipe.svm.c.unwrap_or(1.0), KernelSpec::linear()) };
            let params = MultiClassParams { svm, rounds: recipe.boost_rounds };
            let model = fit_multiclass(&xtr.scaled(scale).with_labels(labels)?, kind, &params, recipe.seed)?;
            collapse_to_binary(&model.predict_all(&xte.scaled(scale))?, &[0, 1, 1])?
        }
        _ => unreachable!("matched filter handled above"),
    };
    let report = assignment_fidelity(&predictions, test.labels())?;
    Ok(MethodOutcome { method: recipe.method, pca_dim, report, predictions, notes })
}

/// SVM parameters for the scaled training set, and the scale factor applied to features.
fn tune_svm(
    xtr: &FeatureMatrix,
    kind: KernelKind,
    settings: &SvmSettings,
    seed: u64,
    notes: &mut Vec<String>,
) -> Result<(SvmParams, f64)> {
    let scale = 1.0 / rms_norm(xtr);
    let scaled = xtr.scaled(scale);
    let labels = signed_labels(xtr.labels());
    let base_gamma = if kind == KernelKind::Rbf { median_gamma(&scaled, settings.median_rows, seed)? } else { 0.0 };
    let kernel = |g: f64| if kind == KernelKind::Rbf { KernelSpec::rbf(g) } else { Ok(KernelSpec::linear()) };
    let mut params = SvmParams { tol: settings.tol, ..SvmParams::new(settings.c.unwrap_or(1.0), kernel(base_gamma)?) };

    let fixed_gamma = kind == KernelKind::Linear || settings.gamma_scale.is_some();
    if let Some(s) = settings.gamma_scale {
        params.kernel = kernel(base_gamma * s)?;
    }
    if settings.c.is_none() || !fixed_gamma {
        let c_grid = settings.c.map_or_else(|| settings.c_grid.clone(), |c| vec![c]);
        let gammas: Vec<f64> = if fixed_gamma {
            vec![params.kernel.gamma]
        } else {
            settings.gamma_scales.iter().map(|s| s * base_gamma).collect()
        };
        let cv = cross_validate(&scaled, &labels, &c_grid, &gammas, settings.folds, seed, &params)?;
        params.c = cv.c;
        if kind == KernelKind::Rbf {
            params.kernel = kernel(cv.gamma)?;
        }
        notes.push(format!("cv error {:.5}", cv.cv_error));
    }
    notes.push(format!("C {} gamma {:.4e}", params.c, params.kernel.gamma));
    Ok((params, scale))
}

/// Vectorizes, splits and evaluates one recipe on a dataset.
pub fn evaluate_dataset(dataset: &Dataset, recipe: &Recipe, shuffle: Option<u64>) -> Result<MethodOutcome> {
    let fm = vectorize(dataset)?;
    let (tr, te) = split_half(fm.labels(), shuffle);
    evaluate(&fm.subset(&tr), &fm.subset(&te), recipe, dataset.grid.dt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Requested truncation time (s).
    pub requested_time: f64,
    /// Time actually used after rounding to a bin boundary (s).
    pub time: f64,
    pub n_points: usize,
    pub report: FidelityReport,
}

/// Retrains and scores `recipe` with every shot truncated to each time in `times` (s),
/// rounded to the nearest bin boundary.
pub fn time_sweep(dataset: &Dataset, recipe: &Recipe, times: &[f64]) -> Result<Vec<SweepPoint>> {
    if times.is_empty() {
        return Err(Error::invalid("sweep needs at least one truncation time"));
    }
    let dt = dataset.grid.dt();
    let fm = vectorize(dataset)?;
    let (tr, te) = split_half(fm.labels(), None);
    times
        .iter()
        .map(|&t| {
            let n = (t / dt).round() as usize;
            if n < 1 || n > dataset.grid.n_points {
                return Err(Error::invalid(format!(
                    "truncation time {t:e} s lies outside [{dt:e}, {:e}] s",
                    dataset.grid.total_time
                )));
            }
            let full = dataset.grid.n_points;
            let cols: Vec<usize> = (0..n).chain(full..full + n).collect();
            let cut = fm.map_rows(2 * n, |r| cols.iter().map(|&c| r[c]).collect())?;
            let outcome = evaluate(&cut.subset(&tr), &cut.subset(&te), recipe, dt)?;
            Ok(SweepPoint { requested_time: t, time: n as f64 * dt, n_points: n, report: outcome.report })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisSettings {
    pub k: usize,
    /// Cluster count for the ground class; `None` skips it.
    pub ground_k: Option<usize>,
    pub realizations: usize,
    pub max_iter: usize,
    pub late_window: f64,
    pub seed: u64,
}

impl Default for DiagnosisSettings {
    fn default() -> Self {
        Self { k: 3, ground_k: None, realizations: 10, max_iter: 300, late_window: DEFAULT_LATE_WINDOW, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub excited: Clustering,
    pub excited_report: SubclassReport,
    pub ground: Option<(Clustering, SubclassReport)>,
    /// Rows (of the full matrix) in T1-flagged clusters.
    pub t1_rows: Vec<usize>,
    /// Rows in heating-flagged clusters of the ground class.
    pub heating_rows: Vec<usize>,
}

/// Clusters each preparation class and flags T1 and heating subclasses
/// against the empirical class-mean trajectories.
pub fn diagnose(fm: &FeatureMatrix, settings: &DiagnosisSettings) -> Result<Diagnosis> {
    let (g, e) = empirical_references(fm)?;
    let init = KMeansInit::Stabilized { realizations: settings.realizations };
    let run = |class: u8, k: usize| -> Result<(Vec<usize>, Clustering, SubclassReport)> {
        let rows = fm.class_indices(class);
        let sub = fm.subset(&rows);
        let mut c = kmeans(&sub, k, init, settings.max_iter, settings.seed)?;
        c.source_class = Some(class);
        let report = identify_special_clusters(&subclass_report(&c, &sub, class)?, &g, &e, settings.late_window)?;
        Ok((rows, c, report))
    };
    let (excited_rows, excited, excited_report) = run(1, settings.k)?;
    let t1_clusters = excited_report.t1_clusters();
    let t1_rows = excited_rows
        .iter()
        .zip(&excited.assignments)
        .filter(|(_, a)| t1_clusters.contains(a))
        .map(|(&r, _)| r)
        .collect();
    let (ground, heating_rows) = match settings.ground_k {
        Some(k0) => {
            let (rows, c, report) = run(0, k0)?;
            let hc = report.heating_clusters();
            let hr = rows.iter().zip(&c.assignments).filter(|(_, a)| hc.contains(a)).map(|(&r, _)| r).collect();
            (Some((c, report)), hr)
        }
        None => (None, Vec::new()),
    };
    Ok(Diagnosis { excited, excited_report, ground, t1_rows, heating_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "svm".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("matched-filter") && err.contains("rusboost"));
    }

    #[test]
    fn positional_split_is_per_class() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let (tr, te) = split_half(&labels, None);
        assert_eq!(tr, vec![0, 1, 4, 5]);
        assert_eq!(te, vec![2, 3, 6, 7]);
        let (a, _) = split_half(&labels, Some(3));
        let (b, _) = split_half(&labels, Some(3));
        assert_eq!(a, b);
    }
}
