//! Covariance PCA over a [`FeatureMatrix`], with sector attribution of each
//! component.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureMatrix;
pub use crate::linalg::{eigen_symmetric, EigenError, Matrix, SymmetricEigen, DEFAULT_EIGEN_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least 1 column")]
    NoColumns,
    #[error("total variance is zero")]
    ZeroVariance,
    #[error("k = {k} exceeds dimension {d}")]
    KTooLarge { k: usize, d: usize },
    #[error("matrix has {got} columns, PCA was fit on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// `C = (1/n) Σ (x_i − μ)(x_i − μ)ᵀ` when `center`, else the uncentered
/// second-moment matrix `(1/n) Σ x_i x_iᵀ`.
pub fn covariance(m: &FeatureMatrix, center: bool) -> Result<Matrix, PcaError> {
    let n = m.n_rows();
    let d = m.n_cols();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    if d == 0 {
        return Err(PcaError::NoColumns);
    }
    let mean = if center { column_means(m) } else { vec![0.0; d] };
    let mut c = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in 0..n {
        for (j, (x, mu)) in m.row(r).iter().zip(&mean).enumerate() {
            centered[j] = x - mu;
        }
        for i in 0..d {
            let xi = centered[i];
            for j in i..d {
                c[(i, j)] += xi * centered[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = c[(i, j)] * inv_n;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

pub fn column_means(m: &FeatureMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.n_cols()];
    for r in 0..m.n_rows() {
        for (acc, x) in mean.iter_mut().zip(m.row(r)) {
            *acc += x;
        }
    }
    let n = m.n_rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Descending, in variance units.
    pub eigenvalues: Vec<f64>,
    /// `d x d`, column `j` pairs with `eigenvalues[j]`. These are the loadings.
    pub eigenvectors: Matrix,
    pub explained_ratio: Vec<f64>,
    pub mean: Vec<f64>,
    /// Column label of the largest-|loading| entry of each component.
    pub sector_attribution: Vec<String>,
    pub col_labels: Vec<String>,
    pub centered: bool,
}

impl PcaResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn loadings(&self, component: usize) -> Vec<f64> {
        self.eigenvectors.column(component)
    }
}

/// Centered PCA.
pub fn pca_fit(m: &FeatureMatrix) -> Result<PcaResult, PcaError> {
    pca_fit_with(m, true)
}

pub fn pca_fit_with(m: &FeatureMatrix, center: bool) -> Result<PcaResult, PcaError> {
    let cov = covariance(m, center)?;
    let eig = eigen_symmetric(&cov, DEFAULT_EIGEN_TOL)?;
    let eps = 1e-10 * cov.trace().abs();
    let clamped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < -eps {
                log::warn!("eigenvalue {l:e} is below -{eps:e}; covariance is not PSD");
            }
            l.max(0.0)
        })
        .collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(PcaError::ZeroVariance);
    }
    let explained_ratio = clamped.iter().map(|l| l / total).collect();
    let labels = m.col_labels();
    let d = m.n_cols();
    let sector_attribution = (0..d)
        .map(|j| {
            let mut best = 0;
            for i in 1..d {
                // Strict comparison keeps the earlier column on ties.
                if eig.eigenvectors[(i, j)].abs() > eig.eigenvectors[(best, j)].abs() {
                    best = i;
                }
            }
            labels[best].clone()
        })
        .collect();
    Ok(PcaResult {
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
        explained_ratio,
        mean: if center { column_means(m) } else { vec![0.0; d] },
        sector_attribution,
        col_labels: labels.to_vec(),
        centered: center,
    })
}

/// Scores `(x_i − μ)ᵀ O_k` for the first `k` components, as an `n x k` matrix.
pub fn project(r: &PcaResult, m: &FeatureMatrix, k: usize) -> Result<Matrix, PcaError> {
    let d = r.dim();
    if k > d {
        return Err(PcaError::KTooLarge { k, d });
    }
    if m.n_cols() != d {
        return Err(PcaError::DimensionMismatch {
            expected: d,
            got: m.n_cols(),
        });
    }
    let mut scores = Matrix::zeros(m.n_rows(), k);
    for row in 0..m.n_rows() {
        let x = m.row(row);
        for c in 0..k {
            scores[(row, c)] = (0..d)
                .map(|i| (x[i] - r.mean[i]) * r.eigenvectors[(i, c)])
                .sum();
        }
    }
    Ok(scores)
}

/// Maps scores back to feature space: `scores · O_kᵀ + μ`.
pub fn reconstruct(r: &PcaResult, scores: &Matrix) -> Result<Matrix, PcaError> {
    let d = r.dim();
    let k = scores.cols();
    if k > d {
        return Err(PcaError::KTooLarge { k, d });
    }
    let mut out = Matrix::zeros(scores.rows(), d);
    for row in 0..scores.rows() {
        for i in 0..d {
            out[(row, i)] = r.mean[i] + (0..k).map(|c| scores[(row, c)] * r.eigenvectors[(i, c)]).sum::<f64>();
        }
    }
    Ok(out)
}
