//! Dense networks with hand-written backpropagation, the encoder/trunk/value
//! policy, Adam and checkpoints.

mod adam;
mod checkpoint;
mod mlp;
mod policy;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use mlp::{Mlp, MlpCache};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, log_prob_and_entropy, PolicyArch, PolicyInit, PolicyNet, PolicyOutput,
    LOG_STD_MAX, LOG_STD_MIN,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("observation has {got} entries, network expects {expected}")]
    ObservationDim { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, network expects {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
