//! Variational state: factorized posteriors over popularity, per-link
//! community indicators, and activation vectors, plus the auxiliary scalars
//! introduced by the link-model bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::kernel::KernelModel;

/// Arguments to `exp` are clamped here; a trip is recorded and counted.
pub(crate) const EXP_GUARD: f64 = 700.0;

/// Total guard trips beyond which a fit aborts with a numerical error.
pub(crate) const GUARD_TRIP_LIMIT: u64 = 10_000;

#[inline]
pub(crate) fn guarded_exp(x: f64, trips: &mut u64) -> f64 {
    if x > EXP_GUARD {
        *trips += 1;
        EXP_GUARD.exp()
    } else {
        x.exp()
    }
}

/// Independent Gamma posteriors over node popularity, with cached first
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPosterior {
    shape: DVector<f64>,
    rate: DVector<f64>,
    mean: DVector<f64>,
    mean_log: DVector<f64>,
}

impl GammaPosterior {
    pub fn new(shape: DVector<f64>, rate: DVector<f64>) -> Result<Self> {
        if shape.len() != rate.len() {
            return Err(Error::Input("shape/rate length mismatch".into()));
        }
        if shape
            .iter()
            .chain(rate.iter())
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::Input(
                "gamma posterior parameters must be positive and finite".into(),
            ));
        }
        let mean = shape.component_div(&rate);
        let mean_log = DVector::from_fn(shape.len(), |j, _| digamma(shape[j]) - rate[j].ln());
        Ok(GammaPosterior {
            shape,
            rate,
            mean,
            mean_log,
        })
    }

    pub fn shape(&self) -> &DVector<f64> {
        &self.shape
    }

    pub fn rate(&self) -> &DVector<f64> {
        &self.rate
    }

    /// E[t_j]
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// E[log t_j]
    pub fn mean_log(&self) -> &DVector<f64> {
        &self.mean_log
    }
}

/// Popularity is either a learned Gamma posterior or frozen at exactly 1
/// (the ablation that isolates the content model).
#[derive(Debug, Clone, PartialEq)]
pub enum PopularityModel {
    Learned(GammaPosterior),
    Fixed,
}

impl PopularityModel {
    #[inline]
    pub fn mean(&self, j: usize) -> f64 {
        match self {
            PopularityModel::Learned(g) => g.mean()[j],
            PopularityModel::Fixed => 1.0,
        }
    }

    #[inline]
    pub fn mean_log(&self, j: usize) -> f64 {
        match self {
            PopularityModel::Learned(g) => g.mean_log()[j],
            PopularityModel::Fixed => 0.0,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, PopularityModel::Fixed)
    }
}

/// Per-link community responsibilities, one row of length `communities`
/// per link slot, each nonnegative and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkAssignments {
    communities: usize,
    probs: Vec<f64>,
}

impl LinkAssignments {
    pub fn uniform(links: usize, communities: usize) -> Self {
        LinkAssignments {
            communities,
            probs: vec![1.0 / communities as f64; links * communities],
        }
    }

    pub fn communities(&self) -> usize {
        self.communities
    }

    pub fn link_count(&self) -> usize {
        self.probs.len().checked_div(self.communities).unwrap_or(0)
    }

    pub fn row(&self, link: usize) -> &[f64] {
        &self.probs[link * self.communities..(link + 1) * self.communities]
    }

    /// Overwrite one link's responsibilities (used by restricted-bound
    /// probes in tests; the caller keeps the row normalized).
    pub fn set_row(&mut self, link: usize, row: &[f64]) {
        assert_eq!(row.len(), self.communities);
        self.probs[link * self.communities..(link + 1) * self.communities]
            .copy_from_slice(row);
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    /// Total responsibility per community over all links.
    pub fn community_mass(&self) -> DVector<f64> {
        let mut mass = DVector::zeros(self.communities);
        for row in self.probs.chunks(self.communities) {
            for (k, p) in row.iter().enumerate() {
                mass[k] += p;
            }
        }
        mass
    }

    /// Largest deviation of any row sum from 1.
    pub fn worst_normalization(&self) -> f64 {
        self.probs
            .chunks(self.communities)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Gaussian posteriors over the per-community activation vectors. The
/// covariances live in the shared prior eigenbasis: community `k` has
/// covariance `V diag(eig_vars[k]) V^T`, whose diagonal is cached in
/// `diag_vars`. `pullbacks[k]` stores the prior-inverse image of the mean
/// (`means[k] = C * pullbacks[k]`), which the mean solver maintains so the
/// prior quadratic form never requires an explicit inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPosterior {
    pub means: Vec<DVector<f64>>,
    pub eig_vars: Vec<DVector<f64>>,
    pub diag_vars: Vec<DVector<f64>>,
    pub pullbacks: Vec<DVector<f64>>,
}

impl ActivationPosterior {
    pub fn communities(&self) -> usize {
        self.means.len()
    }

    pub fn node_count(&self) -> usize {
        self.means.first().map_or(0, DVector::len)
    }

    /// E[exp y_ik] = exp(mean + variance/2), overflow-guarded. Returns the
    /// node-by-community matrix and the number of guard trips.
    pub fn exp_moments(&self) -> (DMatrix<f64>, u64) {
        let n = self.node_count();
        let k = self.communities();
        let mut trips = 0u64;
        let mut out = DMatrix::zeros(n, k);
        for c in 0..k {
            let m = &self.means[c];
            let s = &self.diag_vars[c];
            for i in 0..n {
                out[(i, c)] = guarded_exp(m[i] + 0.5 * s[i], &mut trips);
            }
        }
        (out, trips)
    }

    /// Check the structural invariants against the kernel: positive
    /// eigen-variances and cached diagonals consistent with them.
    pub fn validate(&self, kernel: &KernelModel) -> Result<()> {
        for (k, lv) in self.eig_vars.iter().enumerate() {
            if lv.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Input(format!(
                    "community {k} has a non-positive eigen-variance"
                )));
            }
            let diag = kernel.diag_in_eigenbasis(lv);
            if (&diag - &self.diag_vars[k]).amax() > 1e-10 {
                return Err(Error::Input(format!(
                    "community {k} diagonal cache is stale"
                )));
            }
            let back = kernel.covariance() * &self.pullbacks[k];
            if (&back - &self.means[k]).amax() > 1e-6 * (1.0 + self.means[k].amax()) {
                return Err(Error::Input(format!(
                    "community {k} pullback is inconsistent with its mean"
                )));
            }
        }
        Ok(())
    }
}

/// The two families of auxiliary scalars from the link-model bound:
/// `target_mass[k]` is the popularity-weighted activation mass a community
/// spreads over targets, `softmax_mass[i]` the node's activation mass over
/// communities. Both are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalScalars {
    pub target_mass: DVector<f64>,
    pub softmax_mass: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Seed activation means from content clusters through small logits.
    ContentClusters,
    /// Small seeded random logits only.
    RandomLogits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub communities: usize,
    /// Popularity prior shape (uninformative by default).
    pub prior_shape: f64,
    /// Popularity prior rate.
    pub prior_rate: f64,
    pub max_iters: usize,
    /// Absolute lower-bound change below which the fit stops.
    pub tol: f64,
    pub seed: u64,
    /// Freeze popularity at 1 (ablation isolating the content model).
    pub fixed_popularity: bool,
    pub init: InitScheme,
}

impl FitConfig {
    pub fn new(communities: usize) -> Self {
        FitConfig {
            communities,
            prior_shape: 1e-3,
            prior_rate: 1e-3,
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
            fixed_popularity: false,
            init: InitScheme::ContentClusters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.communities < 1 {
            return Err(Error::Input("need at least 1 community".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Input("tolerance must be positive".into()));
        }
        if !(self.prior_shape > 0.0 && self.prior_rate > 0.0) {
            return Err(Error::Input("prior shape and rate must be positive".into()));
        }
        Ok(())
    }
}

/// The full variational state of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub popularity: PopularityModel,
    pub assignments: LinkAssignments,
    pub activations: ActivationPosterior,
    pub scalars: VariationalScalars,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Soft memberships, one row per node (rows sum to 1).
    pub memberships: DMatrix<f64>,
    pub state: FitState,
    /// Lower-bound value at initialization and after each iteration.
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Times the exp-overflow guard clamped an argument.
    pub guard_trips: u64,
}
