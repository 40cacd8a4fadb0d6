//! On-disk formats.
//!
//! A dataset is three files sharing a stem: `<stem>.json` (sidecar with grid,
//! provenance and per-shot ground truth), `<stem>.f64` (little-endian f64,
//! row-major, one row of `[Re ‖ Im]` per shot) and `<stem>.labels` (one byte
//! per shot). Feature matrices use the same layout without the per-shot table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{unvectorize, vectorize_samples, FeatureMatrix};
use crate::sim::{Dataset, DatasetMetadata, Jump, TimeGrid, Trajectory};

const DATASET_FORMAT: &str = "qreadout-dataset";
const FEATURE_FORMAT: &str = "qreadout-features";
const VERSION: u32 = 1;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            8 * expected
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShotRecord {
    shot_id: usize,
    initial_state: u8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    jumps: Vec<Jump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetSidecar {
    format: String,
    version: u32,
    n_shots: usize,
    n_points: usize,
    total_time_s: f64,
    dt_s: f64,
    columns: usize,
    dtype: String,
    endianness: String,
    layout: String,
    label_layout: String,
    data_file: String,
    labels_file: String,
    metadata: DatasetMetadata,
    shots: Vec<ShotRecord>,
}

/// Paths written for a stem in a directory.
pub fn dataset_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.f64")), dir.join(format!("{stem}.labels")))
}

/// Writes the three dataset files and returns the sidecar path.
pub fn write_dataset(dataset: &Dataset, dir: &Path, stem: &str) -> Result<PathBuf> {
    let (sidecar_path, data_path, labels_path) = dataset_paths(dir, stem);
    let n = dataset.grid.n_points;
    let mut values = Vec::with_capacity(dataset.len() * 2 * n);
    for t in &dataset.trajectories {
        values.extend(vectorize_samples(&t.samples));
    }
    write_atomic(&data_path, &f64_bytes(&values))?;
    write_atomic(&labels_path, &dataset.labels)?;
    let sidecar = DatasetSidecar {
        format: DATASET_FORMAT.into(),
        version: VERSION,
        n_shots: dataset.len(),
        n_points: n,
        total_time_s: dataset.grid.total_time,
        dt_s: dataset.grid.dt(),
        columns: 2 * n,
        dtype: "f64".into(),
        endianness: "little".into(),
        layout: "row-major; real parts of all bins, then imaginary parts".into(),
        label_layout: "one byte per shot, 0 or 1; first half prepared in 0".into(),
        data_file: file_name(&data_path),
        labels_file: file_name(&labels_path),
        metadata: dataset.metadata.clone(),
        shots: dataset
            .trajectories
            .iter()
            .map(|t| ShotRecord { shot_id: t.shot_id, initial_state: t.initial_state, jumps: t.jump_record.clone() })
            .collect(),
    };
    write_json_atomic(&sidecar_path, &sidecar)?;
    Ok(sidecar_path)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sibling(sidecar: &Path, name: &str) -> PathBuf {
    sidecar.parent().unwrap_or(Path::new(".")).join(name)
}

pub fn read_dataset(sidecar_path: &Path) -> Result<Dataset> {
    let sc: DatasetSidecar = read_json(sidecar_path)?;
    if sc.format != DATASET_FORMAT {
        return Err(Error::Format(format!("{} is not a dataset sidecar", sidecar_path.display())));
    }
    if sc.version != VERSION || sc.endianness != "little" || sc.dtype != "f64" {
        return Err(Error::Format("unsupported dataset encoding".into()));
    }
    if sc.columns != 2 * sc.n_points || sc.shots.len() != sc.n_shots {
        return Err(Error::Format("sidecar shape fields disagree".into()));
    }
    let grid = TimeGrid::new(sc.total_time_s, sc.n_points).map_err(|e| Error::Format(e.to_string()))?;
    let values = read_f64s(&sibling(sidecar_path, &sc.data_file), sc.n_shots * sc.columns)?;
    let labels = fs::read(sibling(sidecar_path, &sc.labels_file))?;
    if labels.len() != sc.n_shots {
        return Err(Error::Format(format!("{} labels for {} shots", labels.len(), sc.n_shots)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::UnknownLabel(bad));
    }
    let trajectories = values
        .chunks_exact(sc.columns)
        .zip(&sc.shots)
        .zip(&labels)
        .map(|((row, rec), &label)| {
            Ok(Trajectory {
                samples: unvectorize(row)?,
                prep_label: label,
                shot_id: rec.shot_id,
                initial_state: rec.initial_state,
                jump_record: rec.jumps.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { trajectories, grid, labels, metadata: sc.metadata })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureSidecar {
    format: String,
    version: u32,
    n_rows: usize,
    n_cols: usize,
    dtype: String,
    endianness: String,
    data_file: String,
    labels_file: String,
}

pub fn write_features(fm: &FeatureMatrix, dir: &Path, stem: &str) -> Result<PathBuf> {
    let (sidecar_path, data_path, labels_path) = dataset_paths(dir, stem);
    write_atomic(&data_path, &f64_bytes(fm.as_slice()))?;
    write_atomic(&labels_path, fm.labels())?;
    write_json_atomic(
        &sidecar_path,
        &FeatureSidecar {
            format: FEATURE_FORMAT.into(),
            version: VERSION,
            n_rows: fm.n_rows(),
            n_cols: fm.n_cols(),
            dtype: "f64".into(),
            endianness: "little".into(),
            data_file: file_name(&data_path),
            labels_file: file_name(&labels_path),
        },
    )?;
    Ok(sidecar_path)
}

pub fn read_features(sidecar_path: &Path) -> Result<FeatureMatrix> {
    let sc: FeatureSidecar = read_json(sidecar_path)?;
    if sc.format != FEATURE_FORMAT || sc.version != VERSION || sc.endianness != "little" || sc.dtype != "f64" {
        return Err(Error::Format(format!("{} is not a feature sidecar", sidecar_path.display())));
    }
    let values = read_f64s(&sibling(sidecar_path, &sc.data_file), sc.n_rows * sc.n_cols)?;
    let labels = fs::read(sibling(sidecar_path, &sc.labels_file))?;
    FeatureMatrix::new(values, sc.n_cols, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, ExperimentSpec};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec { shots: 6, ..Default::default() };
        let ds = generate_dataset(&spec, 11).unwrap();
        let path = write_dataset(&ds, dir.path(), "set").unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_data_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let fm = FeatureMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 1]).unwrap();
        let path = write_features(&fm, dir.path(), "f").unwrap();
        assert_eq!(read_features(&path).unwrap(), fm);
        fs::write(dir.path().join("f.f64"), [0u8; 12]).unwrap();
        assert!(matches!(read_features(&path), Err(Error::Format(_))));
    }
}
