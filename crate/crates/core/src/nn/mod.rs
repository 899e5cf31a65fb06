//! Feed-forward network engine with reverse-mode gradients.

mod io;
mod layers;
mod loss;
mod model;
mod train;

use thiserror::Error;

pub use io::{deserialize_model, model_tag, serialize_model, serialize_model_tagged, ModelFileError};
pub use layers::{capture_points, infer_shapes, Architecture, LayerSpec};
pub use loss::{argmax, log_softmax_at, max_other, softmax, LossKind};
pub use model::{input_gradient, ActivationTrace, ForwardPass, LayerParams, Model, ParamGrads};
pub use train::{evaluate, predict, train, EpochMetrics, Optimizer, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}
