//! Reference classifier and noise-robust losses for training on weak labels.

mod loss;
mod metrics;
mod model;

pub use loss::{softmax, LossKind, LossSpec, PROB_FLOOR};
pub use metrics::{evaluate, score, Evaluation};
pub use model::{train, Adam, Classifier, TrainConfig};
