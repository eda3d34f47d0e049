//! Small reverse-mode differentiable networks.
//!
//! Only the layer set needed by the agent is supported: valid (unpadded)
//! strided convolutions and dense layers, each followed by either a
//! LeakyReLU or the identity. Everything runs in `f64` on row-major
//! buffers; batches are laid out sample-major (`[N, C, H, W]` for images,
//! `[N, D]` for vectors).

mod adam;
mod checkpoint;
mod gemm;
mod gradcheck;
mod network;
mod params;
mod trainable;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions, GradCheckReport};
pub use network::{
    Activation, Gradients, InputShape, LayerSpec, Network, NetworkSpec, Tape, LEAKY_SLOPE,
};
pub use params::{ParamArray, ParamSet};
pub use trainable::Trainable;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("layer {layer}: {reason}")]
    IncompatibleLayer { layer: usize, reason: String },
    #[error("input length {got} does not match batch {batch} x {expected}")]
    InputShape {
        got: usize,
        batch: usize,
        expected: usize,
    },
    #[error("gradient length {got} does not match output length {expected}")]
    GradShape { got: usize, expected: usize },
    #[error("tape was recorded by a different network")]
    ForeignTape,
    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("parameter count {got} differs from expected {expected}")]
    ParamCount { got: usize, expected: usize },
    #[error("shape mismatch in array `{name}`")]
    ArrayShape { name: String },
    #[error("non-finite gradient in array `{name}`")]
    NonFiniteGradient { name: String },
    #[error("non-finite parameter in array `{name}` after update")]
    NonFiniteParameter { name: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;
