//! Flat feature vectors, PCA, and matched-filter statistics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sim::{Dataset, Trajectory};

/// Row-major matrix of shots × features with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_cols: usize,
    labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_cols: usize, labels: Vec<u8>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::invalid("feature matrix needs at least one column"));
        }
        if data.len() % n_cols != 0 {
            return Err(Error::Format(format!("{} values do not fill rows of {n_cols}", data.len())));
        }
        check_dim(data.len() / n_cols, labels.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite entry at row {}, column {}", pos / n_cols, pos % n_cols)));
        }
        Ok(Self { data, n_cols, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            check_dim(n_cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(data, n_cols, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        check_dim(self.n_rows(), labels.len())?;
        Ok(Self { data: self.data.clone(), n_cols: self.n_cols, labels })
    }

    pub fn class_indices(&self, label: u8) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, n_cols: self.n_cols, labels: indices.iter().map(|&i| self.labels[i]).collect() }
    }

    /// Applies `f` to every row, producing a matrix with `n_out` columns.
    pub fn map_rows<F>(&self, n_out: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
    {
        let rows: Vec<Vec<f64>> = self.data.par_chunks_exact(self.n_cols).map(f).collect();
        let mut data = Vec::with_capacity(rows.len() * n_out);
        for r in &rows {
            check_dim(n_out, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(data, n_out, self.labels.clone())
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * factor).collect(), n_cols: self.n_cols, labels: self.labels.clone() }
    }
}

/// `[Re(c) ‖ Im(c)]`.
pub fn vectorize_samples(samples: &[Complex64]) -> Vec<f64> {
    samples.iter().map(|c| c.re).chain(samples.iter().map(|c| c.im)).collect()
}

pub fn unvectorize(row: &[f64]) -> Result<Vec<Complex64>> {
    if row.len() % 2 != 0 {
        return Err(Error::Format(format!("row length {} is odd", row.len())));
    }
    let n = row.len() / 2;
    Ok((0..n).map(|j| Complex64::new(row[j], row[n + j])).collect())
}

pub fn vectorize(dataset: &Dataset) -> Result<FeatureMatrix> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot vectorize an empty dataset"));
    }
    let n = dataset.grid.n_points;
    let mut data = Vec::with_capacity(dataset.len() * 2 * n);
    for t in &dataset.trajectories {
        check_dim(n, t.samples.len())?;
        data.extend(vectorize_samples(&t.samples));
    }
    FeatureMatrix::new(data, 2 * n, dataset.labels.clone())
}

const SCATTER_CHUNK: usize = 1024;

/// Mean and scatter matrix `Σ (x−μ)(x−μ)ᵀ` of the selected rows.
pub(crate) fn mean_and_scatter(fm: &FeatureMatrix, idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = fm.n_cols();
    let mut mean = DVector::zeros(d);
    for &i in idx {
        for (m, v) in mean.iter_mut().zip(fm.row(i)) {
            *m += v;
        }
    }
    mean /= idx.len().max(1) as f64;
    let scatter = idx
        .par_chunks(SCATTER_CHUNK)
        .map(|chunk| {
            let block = DMatrix::from_fn(chunk.len(), d, |r, c| fm.row(chunk[r])[c] - mean[c]);
            block.tr_mul(&block)
        })
        .reduce(|| DMatrix::zeros(d, d), |a, b| a + b);
    (mean, scatter)
}

/// Principal-component model fitted on pooled training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// M × d, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
    pub variance_fraction_captured: f64,
}

/// Full descending eigen-decomposition of a symmetric matrix.
pub(crate) fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn fit_pca(train: &FeatureMatrix, variance_fraction: f64) -> Result<PcaModel> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::invalid(format!("variance fraction must lie in (0, 1], got {variance_fraction}")));
    }
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two rows"));
    }
    let idx: Vec<usize> = (0..n).collect();
    let (mean, scatter) = mean_and_scatter(train, &idx);
    let cov = scatter / (n - 1) as f64;
    let (values, vectors) = sorted_eigen(cov);
    let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();

    let mut d = values.len();
    if total > 0.0 {
        let mut acc = 0.0;
        for (i, v) in values.iter().enumerate() {
            acc += v;
            if acc >= variance_fraction * total {
                d = i + 1;
                break;
            }
        }
    } else {
        d = 1;
    }
    let captured = if total > 0.0 { values[..d].iter().sum::<f64>() / total } else { 1.0 };
    Ok(PcaModel {
        mean,
        components: vectors.columns(0, d).into_owned(),
        eigenvalues: values[..d].to_vec(),
        total_variance: total,
        variance_fraction_captured: captured,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let centered = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        Ok(self.components.tr_mul(&centered).iter().copied().collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), z.len())?;
        let z = DVector::from_column_slice(z);
        Ok((&self.mean + &self.components * z).iter().copied().collect())
    }

    pub fn project_matrix(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_dim(self.input_dim(), fm.n_cols())?;
        fm.map_rows(self.output_dim(), |r| self.project(r).expect("dimension checked"))
    }
}

/// Complex per-bin weights of a linear filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    pub weights: Vec<Complex64>,
    /// φ_j, the quadrature each bin is projected on.
    pub phases: Vec<f64>,
    /// Bin width in seconds.
    pub dt: f64,
}

impl FilterKernel {
    /// Kernel from weights alone, with φ_j = −arg(w_j).
    pub fn from_weights(weights: Vec<Complex64>, dt: f64) -> Self {
        let phases = weights.iter().map(|w| -w.arg()).collect();
        Self { weights, phases, dt }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// S = Σ_j |w_j| Re[e^{−iφ_j} c_j] dt.
    pub fn statistic(&self, samples: &[Complex64]) -> Result<f64> {
        check_dim(self.len(), samples.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&self.phases)
            .zip(samples)
            .map(|((w, phi), c)| w.norm() * (Complex64::from_polar(1.0, -phi) * c).re)
            .sum::<f64>()
            * self.dt)
    }

    /// Same statistic on a flattened `[Re ‖ Im]` row.
    pub fn statistic_row(&self, row: &[f64]) -> Result<f64> {
        check_dim(2 * self.len(), row.len())?;
        let n = self.len();
        Ok((0..n)
            .map(|j| {
                let u = Complex64::from_polar(self.weights[j].norm(), -self.phases[j]);
                u.re * row[j] - u.im * row[n + j]
            })
            .sum::<f64>()
            * self.dt)
    }
}

/// Kernel `w_j = β̂_j* / var(I_j)` estimated from a labelled dataset.
pub fn optimal_kernel(train: &Dataset) -> Result<FilterKernel> {
    optimal_kernel_from_features(&vectorize(train)?, train.grid.dt())
}

/// As [`optimal_kernel`] for already-flattened rows with bin width `dt`.
pub fn optimal_kernel_from_features(train: &FeatureMatrix, dt: f64) -> Result<FilterKernel> {
    if train.n_cols() % 2 != 0 {
        return Err(Error::Format("flattened trajectories need an even column count".into()));
    }
    let n = train.n_cols() / 2;
    let idx0 = train.class_indices(0);
    let idx1 = train.class_indices(1);
    if idx0.len() < 2 || idx1.len() < 2 {
        return Err(Error::invalid("both classes need at least two shots"));
    }
    let mean = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; 2 * n];
        for &i in idx {
            m.iter_mut().zip(train.row(i)).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|a| *a /= idx.len() as f64);
        m
    };
    let (m0, m1) = (mean(&idx0), mean(&idx1));
    let beta: Vec<Complex64> = (0..n).map(|j| Complex64::new(m0[j] - m1[j], m0[n + j] - m1[n + j])).collect();
    let rot: Vec<Complex64> = beta.iter().map(|b| Complex64::from_polar(1.0, -b.arg())).collect();

    let mut ss = vec![0.0; n];
    for (idx, m) in [(&idx0, &m0), (&idx1, &m1)] {
        for &i in idx.iter() {
            let r = train.row(i);
            for j in 0..n {
                let resid = Complex64::new(r[j] - m[j], r[n + j] - m[n + j]);
                ss[j] += (rot[j] * resid).re.powi(2);
            }
        }
    }
    let dof = (idx0.len() + idx1.len() - 2) as f64;
    let mut weights = Vec::with_capacity(n);
    for j in 0..n {
        let var = ss[j] / dof;
        if var <= 0.0 {
            return Err(Error::DegenerateKernel(format!("zero information-quadrature variance in bin {j}")));
        }
        weights.push(beta[j].conj() / var);
    }
    if weights.iter().all(|w| w.norm() == 0.0) {
        return Err(Error::DegenerateKernel("class means coincide in every bin".into()));
    }
    let phases = beta.iter().map(|b| b.arg()).collect();
    Ok(FilterKernel { weights, phases, dt })
}

pub fn matched_filter_statistic(traj: &Trajectory, kernel: &FilterKernel) -> Result<f64> {
    kernel.statistic(&traj.samples)
}

/// Matched filter plus the midpoint threshold between the class means of S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedFilterClassifier {
    pub kernel: FilterKernel,
    pub threshold: f64,
    pub mean0: f64,
    pub mean1: f64,
}

impl MatchedFilterClassifier {
    pub fn fit(train: &FeatureMatrix, dt: f64) -> Result<Self> {
        let kernel = optimal_kernel_from_features(train, dt)?;
        let stats = statistics(&kernel, train)?;
        let class_mean = |label: u8| {
            let vals: Vec<f64> = stats.iter().zip(train.labels()).filter(|(_, &l)| l == label).map(|(s, _)| *s).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let (mean0, mean1) = (class_mean(0), class_mean(1));
        Ok(Self { kernel, threshold: 0.5 * (mean0 + mean1), mean0, mean1 })
    }

    /// 0 iff S is strictly above the threshold.
    pub fn classify_row(&self, row: &[f64]) -> Result<u8> {
        Ok(if self.kernel.statistic_row(row)? > self.threshold { 0 } else { 1 })
    }

    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<u8>> {
        fm.rows().map(|r| self.classify_row(r)).collect()
    }
}

/// S for every row of a flattened matrix.
pub fn statistics(kernel: &FilterKernel, fm: &FeatureMatrix) -> Result<Vec<f64>> {
    fm.rows().map(|r| kernel.statistic_row(r)).collect()
}
