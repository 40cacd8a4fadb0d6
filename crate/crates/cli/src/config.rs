//! Run configuration file.
//!
//! JSON with units in the key names. Every section is optional; missing keys
//! take their defaults, unknown keys are rejected.

use std::path::{Path, PathBuf};

use qreadout::cluster::DEFAULT_LATE_WINDOW;
use qreadout::pipeline::{DiagnosisSettings, Method, Recipe, SvmSettings};
use qreadout::sim::ExperimentSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset sidecar to read; when absent a dataset is simulated from `simulation`.
    pub dataset: Option<PathBuf>,
    pub simulation: ExperimentSpec,
    pub evaluate: EvaluateConfig,
    pub diagnose: DiagnoseConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dataset: None,
            simulation: ExperimentSpec::default(),
            evaluate: EvaluateConfig::default(),
            diagnose: DiagnoseConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub methods: Vec<Method>,
    /// Adds a PCA-preprocessed cell for every method except the matched filter.
    pub pca: bool,
    pub pca_variance_fraction: f64,
    pub shrinkage: f64,
    pub svm: SvmSettings,
    pub kmeans_k: usize,
    pub kmeans_realizations: usize,
    pub boost_rounds: usize,
    pub repeats: usize,
    pub shuffle_split: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        let r = Recipe::default();
        Self {
            methods: Method::ALL.to_vec(),
            pca: false,
            pca_variance_fraction: 0.999,
            shrinkage: r.shrinkage,
            svm: r.svm,
            kmeans_k: r.kmeans_k,
            kmeans_realizations: r.kmeans_realizations,
            boost_rounds: r.boost_rounds,
            repeats: 1,
            shuffle_split: false,
        }
    }
}

impl EvaluateConfig {
    pub fn recipe(&self, method: Method, pca: bool, seed: u64) -> Recipe {
        Recipe {
            method,
            pca_fraction: pca.then_some(self.pca_variance_fraction),
            shrinkage: self.shrinkage,
            svm: self.svm.clone(),
            kmeans_k: self.kmeans_k,
            kmeans_realizations: self.kmeans_realizations,
            boost_rounds: self.boost_rounds,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub k: usize,
    pub ground_k: Option<usize>,
    pub realizations: usize,
    pub max_iter: usize,
    pub late_window: f64,
    pub replace: bool,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { k: 3, ground_k: None, realizations: 10, max_iter: 300, late_window: DEFAULT_LATE_WINDOW, replace: false }
    }
}

impl DiagnoseConfig {
    pub fn settings(&self, seed: u64) -> DiagnosisSettings {
        DiagnosisSettings {
            k: self.k,
            ground_k: self.ground_k,
            realizations: self.realizations,
            max_iter: self.max_iter,
            late_window: self.late_window,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub method: Method,
    pub pca: bool,
    pub times_us: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { method: Method::SvmRbf, pca: false, times_us: (2..=13).map(|k| 0.2 * k as f64).collect() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::Usage(format!("invalid config: {m}")));
        let f = self.evaluate.pca_variance_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("evaluate.pca_variance_fraction must lie in (0, 1], got {f}"));
        }
        if self.evaluate.methods.is_empty() {
            return bad("evaluate.methods is empty".into());
        }
        if self.evaluate.repeats == 0 {
            return bad("evaluate.repeats must be at least 1".into());
        }
        if self.diagnose.k == 0 {
            return bad("diagnose.k must be at least 1".into());
        }
        if self.sweep.times_us.is_empty() {
            return bad("sweep.times_us is empty".into());
        }
        if self.dataset.is_none() {
            self.simulation.validate().map_err(|e| Failure::Usage(format!("invalid config: {e}")))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 4, "simulation": {"shots": 100}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.simulation.shots, 100);
        assert_eq!(c.simulation.kappa_over_2pi_khz, 1210.0);
        assert_eq!(c.evaluate.methods.len(), 10);
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string_pretty(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = serde_json::from_str::<RunConfig>("{\n  \"seed\": 1,\n  \"kappa\": 3\n}").unwrap_err();
        assert_eq!(err.line(), 3);
    }
}
