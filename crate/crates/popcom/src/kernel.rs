//! Shared Gaussian-process covariance over node contents.
//!
//! One covariance matrix (and one eigendecomposition) serves every
//! community; it is built once per fit, which keeps memory at O(n^2)
//! rather than O(K n^2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ContentMatrix;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    #[serde(default = "default_kind")]
    pub kind: KernelKind,
    /// Output scale; the kernel value at zero distance.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Squared bandwidth of the RBF kernel (ignored by the linear kernel).
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    /// Diagonal noise added for numerical positive-definiteness.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_kind() -> KernelKind {
    KernelKind::Rbf
}
fn default_theta() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_jitter() -> f64 {
    1e-5
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            kind: KernelKind::Rbf,
            theta: 1.0,
            sigma2: 1.0,
            jitter: 1e-5,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Input(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Input(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Input(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Covariance matrix with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct KernelModel {
    params: KernelParams,
    covariance: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    eigvec_sq: DMatrix<f64>,
    eigvec_sq_norms: DVector<f64>,
    floored: usize,
}

impl KernelModel {
    pub fn node_count(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Eigenvalues after flooring at the jitter level; all strictly positive.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one per column, paired with `eigenvalues`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Elementwise square of the eigenvector matrix.
    pub fn eigvec_sq(&self) -> &DMatrix<f64> {
        &self.eigvec_sq
    }

    /// Squared eigenvector norms (all ~1 for an orthonormal basis; stored
    /// because the variance solver is formulated against them).
    pub fn eigvec_sq_norms(&self) -> &DVector<f64> {
        &self.eigvec_sq_norms
    }

    /// How many eigenvalues were clamped up to the jitter level.
    pub fn floored_eigenvalues(&self) -> usize {
        self.floored
    }

    /// Apply the inverse covariance through the eigenbasis.
    pub fn prior_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut proj = self.eigenvectors.tr_mul(x);
        for (p, s) in proj.iter_mut().zip(self.eigenvalues.iter()) {
            *p /= s;
        }
        &self.eigenvectors * proj
    }

    /// `x^T C^{-1} x` evaluated in the eigenbasis.
    pub fn prior_quadratic(&self, x: &DVector<f64>) -> f64 {
        let proj = self.eigenvectors.tr_mul(x);
        proj.iter()
            .zip(self.eigenvalues.iter())
            .map(|(p, s)| p * p / s)
            .sum()
    }

    /// Sum of log eigenvalues.
    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|s| s.ln()).sum()
    }

    /// Diagonal of `V diag(lambda) V^T` without materializing the matrix.
    pub fn diag_in_eigenbasis(&self, lambda: &DVector<f64>) -> DVector<f64> {
        &self.eigvec_sq * lambda
    }
}

/// Diagonal of the matrix `V diag(lambda) V^T` for eigenvectors stored as
/// columns of `eigenvectors`: entry `i` is the lambda-weighted sum of the
/// squared `i`-th components.
pub fn diag_from_eigenbasis(eigenvectors: &DMatrix<f64>, lambda: &DVector<f64>) -> DVector<f64> {
    let n = eigenvectors.nrows();
    DVector::from_fn(n, |i, _| {
        eigenvectors
            .row(i)
            .iter()
            .zip(lambda.iter())
            .map(|(v, l)| l * v * v)
            .sum()
    })
}

enum Columns {
    Dense,
    // nonzero (index, value) pairs per column, for mostly-zero content
    Sparse(Vec<Vec<(u32, f64)>>),
}

/// Build the covariance matrix over node contents and eigendecompose it.
///
/// The stored matrix is exactly symmetric and bitwise independent of the
/// number of threads: every entry is produced by the same per-entry formula
/// with no cross-thread reductions.
pub fn build_covariance(content: &ContentMatrix, params: &KernelParams) -> Result<KernelModel> {
    params.validate()?;
    if content.node_count() == 0 {
        return Err(Error::Input("content matrix has no columns".into()));
    }
    if !content.is_finite() {
        return Err(Error::Input("content matrix has non-finite entries".into()));
    }

    let n = content.node_count();
    let d = content.attr_count();

    let nonzeros: usize = (0..n)
        .map(|i| content.column(i).iter().filter(|v| **v != 0.0).count())
        .sum();
    let columns = if d > 16 && (nonzeros as f64) < 0.25 * (n as f64) * (d as f64) {
        Columns::Sparse(
            (0..n)
                .map(|i| {
                    content
                        .column(i)
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(t, v)| (t as u32, *v))
                        .collect()
                })
                .collect(),
        )
    } else {
        Columns::Dense
    };

    let dot = |i: usize, j: usize| -> f64 {
        match &columns {
            Columns::Dense => content
                .column(i)
                .iter()
                .zip(content.column(j))
                .map(|(a, b)| a * b)
                .sum(),
            Columns::Sparse(cols) => {
                let (mut a, mut b) = (cols[i].iter().peekable(), cols[j].iter().peekable());
                let mut acc = 0.0;
                while let (Some(&&(ia, va)), Some(&&(ib, vb))) = (a.peek(), b.peek()) {
                    match ia.cmp(&ib) {
                        std::cmp::Ordering::Less => {
                            a.next();
                        }
                        std::cmp::Ordering::Greater => {
                            b.next();
                        }
                        std::cmp::Ordering::Equal => {
                            acc += va * vb;
                            a.next();
                            b.next();
                        }
                    }
                }
                acc
            }
        }
    };

    let sq_norms: Vec<f64> = (0..n).map(|i| dot(i, i)).collect();
    let theta = params.theta;
    let jitter = params.jitter;
    let inv_two_sigma2 = 1.0 / (2.0 * params.sigma2);

    let mut data = vec![0.0f64; n * n];
    parallel::for_each_chunk_mut(&mut data, n, |col, out| {
        for (row, slot) in out.iter_mut().enumerate() {
            let base = match params.kind {
                KernelKind::Rbf => {
                    // expanded squared distance, clamped at zero
                    let sq = (sq_norms[row] + sq_norms[col] - 2.0 * dot(row, col)).max(0.0);
                    theta * (-sq * inv_two_sigma2).exp()
                }
                KernelKind::Linear => theta * dot(row, col),
            };
            *slot = if row == col { base + jitter } else { base };
        }
    });
    let covariance = DMatrix::from_vec(n, n, data);
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("covariance has non-finite entries".into()));
    }

    let eig = covariance.clone().symmetric_eigen();
    let mut eigenvalues = eig.eigenvalues;
    let mut floored = 0usize;
    for v in eigenvalues.iter_mut() {
        if *v < jitter {
            *v = jitter;
            floored += 1;
        }
    }
    if eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::numerical(
            "build_covariance",
            "covariance is singular after flooring; increase the jitter",
        ));
    }
    let eigenvectors = eig.eigenvectors;
    let eigvec_sq = eigenvectors.map(|v| v * v);
    let eigvec_sq_norms = DVector::from_fn(n, |j, _| eigvec_sq.column(j).sum());

    Ok(KernelModel {
        params: *params,
        covariance,
        eigenvalues,
        eigenvectors,
        eigvec_sq,
        eigvec_sq_norms,
        floored,
    })
}
