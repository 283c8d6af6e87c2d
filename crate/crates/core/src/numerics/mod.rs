//! Dense tensors, reverse-mode differentiation, the training losses, a
//! finite-difference gradient checker, and the checkpoint container.

mod checkpoint;
mod gradcheck;
mod graph;
pub mod losses;
mod tensor;

use thiserror::Error;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, NodeId};
pub(crate) use graph::surrogate_term;
pub use losses::{cosine_similarity, cross_entropy, infonce_align, total_loss, AlignmentBatch};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("ShapeMismatchError in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("ZeroNormError: vector with zero norm")]
    ZeroNorm,
    #[error("NonPositiveTauError: temperature must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("LabelOutOfRangeError: label {label} with {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("GraphCycleError: node {node} refers forward")]
    GraphCycle { node: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(String),
}
