//! Gaussian discriminants: LDAd, LDA, QDAd and QDA.
//!
//! Scores carry no constant term; class 0 is chosen iff `score(x) > threshold`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::{mean_and_scatter, sorted_eigen, FeatureMatrix};

/// Covariance matrices with a larger eigenvalue ratio than this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Shrinkage values tried in order when a pooled covariance is singular.
const SHRINKAGE_LADDER: [f64; 13] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Pooled covariance, diagonal.
    Ldad,
    /// Pooled covariance.
    Lda,
    /// Per-class covariance, diagonal.
    Qdad,
    /// Per-class covariance.
    Qda,
}

impl Variant {
    pub fn is_pooled(self) -> bool {
        matches!(self, Variant::Ldad | Variant::Lda)
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, Variant::Ldad | Variant::Qdad)
    }
}

/// Symmetric positive-definite matrix with its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    pub matrix: DMatrix<f64>,
    /// Lower-triangular L with `matrix = L Lᵀ`.
    pub factor: DMatrix<f64>,
    pub log_det: f64,
    pub condition: f64,
}

impl SpdMatrix {
    /// Fails with `SingularCovariance` if the matrix is not safely positive definite.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let condition = condition_number(&matrix);
        if !(condition.is_finite() && condition <= MAX_CONDITION) {
            return Err(Error::SingularCovariance { condition });
        }
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::SingularCovariance { condition })?;
        let factor = chol.l();
        let log_det = 2.0 * factor.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { matrix, factor, log_det, condition })
    }

    fn cholesky(&self) -> Cholesky<f64, Dyn> {
        Cholesky::pack_dirty(self.factor.clone())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.cholesky().solve(b)
    }

    /// xᵀ M⁻¹ x via a triangular solve.
    pub fn inv_quad(&self, x: &DVector<f64>) -> f64 {
        let y = self.factor.solve_lower_triangular(x).expect("factor has a positive diagonal");
        y.norm_squared()
    }
}

/// λ_max / λ_min, or infinity if the smallest eigenvalue is not positive.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let (vals, _) = sorted_eigen(m.clone());
    let (max, min) = (vals[0], vals[vals.len() - 1]);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Σ ← (1−λ)Σ + λ·diag(Σ).
pub fn shrink_toward_diagonal(cov: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut out = cov * (1.0 - lambda);
    for i in 0..cov.nrows() {
        out[(i, i)] = cov[(i, i)];
    }
    out
}

fn diagonal_only(cov: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&cov.diagonal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiscriminantModel {
    pub variant: Variant,
    pub mean0: DVector<f64>,
    pub mean1: DVector<f64>,
    pub cov0: SpdMatrix,
    /// Equal to `cov0` for the pooled variants.
    pub cov1: SpdMatrix,
    /// Shrinkage actually applied (may exceed the requested value for pooled variants).
    pub shrinkage: f64,
    pub prior0: f64,
    pub prior1: f64,
    /// Σ₀⁻¹μ₀ − Σ₁⁻¹μ₁.
    pub linear: DVector<f64>,
    pub threshold: f64,
}

/// Fits a two-class Gaussian discriminant on rows labelled 0 and 1.
///
/// Pooled variants escalate the shrinkage along a decade ladder until the
/// covariance is well conditioned; per-class variants fail with
/// `SingularCovariance` instead.
pub fn fit_gaussian(train: &FeatureMatrix, variant: Variant, shrinkage: f64) -> Result<GaussianDiscriminantModel> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::invalid(format!("shrinkage must lie in [0, 1], got {shrinkage}")));
    }
    let idx0 = train.class_indices(0);
    let idx1 = train.class_indices(1);
    if idx0.len() < 2 || idx1.len() < 2 {
        return Err(Error::invalid(format!(
            "each class needs at least two rows (got {} and {})",
            idx0.len(),
            idx1.len()
        )));
    }
    if idx0.len() + idx1.len() != train.n_rows() {
        let bad = train.labels().iter().find(|&&l| l > 1).copied().unwrap_or(2);
        return Err(Error::UnknownLabel(bad));
    }
    let (n0, n1) = (idx0.len() as f64, idx1.len() as f64);
    let (mean0, s0) = mean_and_scatter(train, &idx0);
    let (mean1, s1) = mean_and_scatter(train, &idx1);
    let prior0 = n0 / (n0 + n1);
    let prior1 = n1 / (n0 + n1);

    let prepare = |cov: DMatrix<f64>| if variant.is_diagonal() { diagonal_only(&cov) } else { cov };
    let (cov0, cov1, lambda) = if variant.is_pooled() {
        let pooled = prepare((&s0 + &s1) / (n0 + n1 - 2.0));
        let (spd, lambda) = pooled_with_escalation(&pooled, shrinkage)?;
        (spd.clone(), spd, lambda)
    } else {
        let c0 = prepare(s0 / (n0 - 1.0));
        let c1 = prepare(s1 / (n1 - 1.0));
        (
            SpdMatrix::new(shrink_toward_diagonal(&c0, shrinkage))?,
            SpdMatrix::new(shrink_toward_diagonal(&c1, shrinkage))?,
            shrinkage,
        )
    };
    Ok(assemble(variant, mean0, mean1, cov0, cov1, lambda, prior0, prior1))
}

fn pooled_with_escalation(cov: &DMatrix<f64>, requested: f64) -> Result<(SpdMatrix, f64)> {
    let first = SpdMatrix::new(shrink_toward_diagonal(cov, requested));
    if let Ok(spd) = first {
        return Ok((spd, requested));
    }
    let mut last = first.unwrap_err();
    for &lambda in SHRINKAGE_LADDER.iter().filter(|&&l| l > requested) {
        match SpdMatrix::new(shrink_toward_diagonal(cov, lambda)) {
            Ok(spd) => return Ok((spd, lambda)),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    variant: Variant,
    mean0: DVector<f64>,
    mean1: DVector<f64>,
    cov0: SpdMatrix,
    cov1: SpdMatrix,
    shrinkage: f64,
    prior0: f64,
    prior1: f64,
) -> GaussianDiscriminantModel {
    let prior_term = (prior1 / prior0).ln();
    let (linear, threshold) = if variant.is_pooled() {
        let diff = &mean0 - &mean1;
        let w = cov0.solve(&diff);
        let mid = 0.5 * (&mean0 + &mean1);
        let t = mid.dot(&w) + prior_term;
        (w, t)
    } else {
        let a0 = cov0.solve(&mean0);
        let a1 = cov1.solve(&mean1);
        let t = 0.5 * (mean0.dot(&a0) - mean1.dot(&a1)) + 0.5 * (cov0.log_det - cov1.log_det) + prior_term;
        (a0 - a1, t)
    };
    GaussianDiscriminantModel { variant, mean0, mean1, cov0, cov1, shrinkage, prior0, prior1, linear, threshold }
}

impl GaussianDiscriminantModel {
    /// QDA-form model from explicit parameters; pooled variants require `cov0 == cov1`.
    pub fn from_parameters(
        variant: Variant,
        mean0: DVector<f64>,
        mean1: DVector<f64>,
        cov0: DMatrix<f64>,
        cov1: DMatrix<f64>,
        prior0: f64,
    ) -> Result<Self> {
        check_dim(mean0.len(), mean1.len())?;
        check_dim(mean0.len(), cov0.nrows())?;
        check_dim(mean0.len(), cov1.nrows())?;
        if !(prior0 > 0.0 && prior0 < 1.0) {
            return Err(Error::invalid("prior must lie in (0, 1)"));
        }
        let c0 = SpdMatrix::new(cov0)?;
        let c1 = SpdMatrix::new(cov1)?;
        Ok(assemble(variant, mean0, mean1, c0, c1, 0.0, prior0, 1.0 - prior0))
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let x = DVector::from_column_slice(x);
        let lin = x.dot(&self.linear);
        if self.variant.is_pooled() {
            Ok(lin)
        } else {
            Ok(-0.5 * (self.cov0.inv_quad(&x) - self.cov1.inv_quad(&x)) + lin)
        }
    }

    /// 0 iff the score is strictly above the threshold.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(if self.score(x)? > self.threshold { 0 } else { 1 })
    }

    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<u8>> {
        use rayon::prelude::*;
        check_dim(self.dim(), fm.n_cols())?;
        (0..fm.n_rows()).into_par_iter().map(|i| self.classify(fm.row(i))).collect()
    }

    /// Σ₀⁻¹ − Σ₁⁻¹ (zero for pooled variants).
    pub fn quadratic_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        if self.variant.is_pooled() {
            return DMatrix::zeros(d, d);
        }
        let id = DMatrix::identity(d, d);
        self.cov0.cholesky().solve(&id) - self.cov1.cholesky().solve(&id)
    }
}
