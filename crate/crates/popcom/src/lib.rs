// `!(x > 0.0)` guards are used on purpose: they reject NaN along with
// non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Community detection for attributed directed networks.
//!
//! Links are explained by a popularity-driven target model, node content by
//! a discriminative Gaussian-process activation model; the two are fit
//! jointly by variational EM. The crate also ships a generative sampler for
//! synthetic benchmarks, the standard partition metrics (NMI, pairwise
//! F-measure, modularity), and loaders for the two-file citation dataset
//! format used by Cora and Citeseer.

pub mod error;
pub mod inference;
pub mod kernel;
pub mod metrics;
pub mod network;
pub mod parallel;
pub mod sampler;

pub use error::{Error, Result};
