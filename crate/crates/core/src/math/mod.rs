//! Dense tensors and the reverse-mode engine used to train the model.

mod finite_diff;
mod graph;
mod tensor;

pub use finite_diff::{finite_diff_grad, finite_diff_grad_scaled, relative_error};
pub use graph::{sigmoid, Elementwise, Graph, NodeId};
pub use tensor::Tensor;


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("log of non-positive value {value} at index {index}")]
    Domain { index: usize, value: f64 },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}
