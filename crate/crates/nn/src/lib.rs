//! Minimal dense neural networks for actor/critic training.
//!
//! Networks are stacks of affine layers, each optionally *noisy*: the
//! effective weights are `nu + sigma * eps`, where `eps` is zero-mean noise
//! sampled explicitly with [`Network::sample_noise`] and held fixed until the
//! next sample or [`Network::clear_noise`]. Gradients flow to both the mean
//! (`nu`) and scale (`sigma`) parameters under the frozen noise.
//!
//! Only what a small actor-critic learner needs is here: batched forward and
//! backward passes, gradients with respect to the input (for deterministic
//! policy gradients through a critic), Adam, and a text checkpoint format.

mod adam;
mod checkpoint;
mod layer;
mod matrix;
mod network;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::{Activation, DenseLayer, LayerKind};
pub use matrix::Matrix;
pub use network::{Gradients, LayerSpec, Network, DEFAULT_SIGMA_INIT};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward called before forward (no cached activations)")]
    NoForwardCache,
    #[error("training diverged: non-finite value in {context}")]
    Divergence { context: String },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, NnError>;
