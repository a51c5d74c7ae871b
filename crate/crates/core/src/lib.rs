//! Weak annotation of activity-recognition datasets from clip embeddings.
//!
//! Clip embeddings of each participant are clustered with a full-covariance
//! Gaussian mixture; an annotator labels only the highest-density clip of every
//! cluster; those labels are propagated (and optionally distance-thresholded),
//! transferred to synchronised sensor streams and used to train classifiers
//! with noise-robust losses.

mod codec;

pub mod annotate;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod ingest;
pub mod pipeline;
pub mod session;
pub mod synth;
pub mod transfer;
pub mod weaktrain;

pub use error::{Error, Result};
