//! Minimal reverse-mode differentiation, layers and optimizer.

mod adam;
pub mod checkpoint;
mod layers;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{soft_update, Dense, GcnLayer, Mlp, Module};
pub use tape::{activate, Activation, Gradients, Groups, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutonetError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
