//! Result bundles and their file forms.

use std::path::Path;

use qreadout::cluster::SubclassReport;
use qreadout::io::{write_atomic, write_json_atomic};
use qreadout::metrics::FidelityReport;
use qreadout::pipeline::{Method, SweepPoint};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub dataset: Option<String>,
}

/// One (method, preprocessing) entry of a fidelity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    /// "raw" or "pca".
    pub preprocessing: String,
    pub pca_dim: Option<usize>,
    /// One report per repetition; empty when the cell failed.
    pub reports: Vec<FidelityReport>,
    pub mean_fidelity: Option<f64>,
    /// Sample variance over repetitions (n − 1 denominator).
    pub fidelity_variance: Option<f64>,
    pub error: Option<String>,
    pub notes: Vec<String>,
}

impl Cell {
    pub fn new(method: Method, pca: bool) -> Self {
        Self {
            method,
            preprocessing: if pca { "pca" } else { "raw" }.into(),
            pca_dim: None,
            reports: Vec::new(),
            mean_fidelity: None,
            fidelity_variance: None,
            error: None,
            notes: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        if self.error.is_some() || self.reports.is_empty() {
            self.reports.clear();
            return;
        }
        let f: Vec<f64> = self.reports.iter().map(|r| r.fidelity).collect();
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        self.mean_fidelity = Some(mean);
        self.fidelity_variance = (f.len() > 1).then(|| f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub provenance: Provenance,
    pub repeats: usize,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassClustering {
    pub class: u8,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub objective: f64,
    pub flagged: Vec<usize>,
    pub report: SubclassReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisBundle {
    pub provenance: Provenance,
    pub excited: ClassClustering,
    pub ground: Option<ClassClustering>,
    pub excited_shots: usize,
    pub t1_flagged: usize,
    pub t1_fraction: f64,
    pub heating_flagged: usize,
    /// Table re-evaluated after T1 replacement, when requested.
    pub replaced: Option<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBundle {
    pub provenance: Provenance,
    pub method: Method,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub provenance: Provenance,
    pub shots: usize,
    pub shots_per_class: [usize; 2],
    pub n_points: usize,
    pub total_time_us: f64,
    /// Fraction of each class whose initial state differs from the label.
    pub prep_flip_fraction: [f64; 2],
    /// Fraction of each class with a jump during the record.
    pub jump_fraction: [f64; 2],
    pub data_file: String,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn table_csv(table: &Table) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record([
        "method",
        "preprocessing",
        "pca_dim",
        "repeats",
        "fidelity",
        "fidelity_variance",
        "stderr",
        "p01",
        "p10",
        "status",
    ])
    .map_err(io)?;
    for c in &table.cells {
        let first = c.reports.first();
        w.write_record([
            c.method.name().to_string(),
            c.preprocessing.clone(),
            c.pca_dim.map(|d| d.to_string()).unwrap_or_default(),
            c.reports.len().to_string(),
            opt(c.mean_fidelity),
            opt(c.fidelity_variance),
            opt(first.map(|r| r.stderr)),
            opt(first.map(|r| r.p01)),
            opt(first.map(|r| r.p10)),
            c.error.clone().unwrap_or_else(|| "ok".into()),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Data(e.to_string()))
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(["t_trunc_us", "n_points", "fidelity", "stderr"]).map_err(io)?;
    for p in points {
        w.write_record([
            format!("{}", p.time * 1e6),
            p.n_points.to_string(),
            format!("{}", p.report.fidelity),
            format!("{}", p.report.stderr),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Data(e.to_string()))
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), Failure> {
    write_json_atomic(&dir.join(name), value).map_err(|e| Failure::Data(format!("cannot write {name}: {e}")))
}

pub fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(&dir.join(name), bytes).map_err(|e| Failure::Data(format!("cannot write {name}: {e}")))
}
