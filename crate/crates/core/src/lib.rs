//! Generalized out-of-distribution fault diagnosis.
//!
//! Tabular process samples are mapped to a vector of internal contrastive
//! losses (one per sliced sub-vector position) by a pair of trained encoders.
//! A Gaussian fitted to those score embeddings on training data yields a
//! Mahalanobis distance and a quantile threshold, which drive two tasks:
//!
//! * process monitoring: flag any sample that leaves the normal region;
//! * open-set fault diagnosis: classify known classes with a softmax
//!   classifier and reject samples beyond the threshold as unknown.
//!
//! A PCA T²/SPE monitor is included as a baseline.

pub mod classifier;
pub mod data;
pub mod error;
pub mod fingerprint;
pub mod icl;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod outlier;
pub mod pca;
pub mod pipeline;

pub use error::{Error, Result};
