//! PPO with GAE over W synchronous rollout workers, in multi-task or
//! sequential (one task at a time) mode.
//!
//! All randomness is drawn from ChaCha streams keyed by
//! `(seed, iteration, index, purpose)`, so a run is a pure function of its
//! config, task distribution and seed, and a resumed run only needs the
//! seed and iteration count from the checkpoint.

mod gae;
mod ppo;
mod rollout;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::EnvError;
use crate::neuralnet::NetError;
use crate::terrain::TerrainError;

pub use gae::compute_gae;
pub use ppo::{minibatch_loss_grad, normalize_advantages, ppo_update, LossParts, Minibatch, PpoConfig, PpoStats};
pub use rollout::{
    assemble, collect_segments, run_greedy_episode, run_worker, sample_action, EpisodeSummary, Segment,
    TrajectoryBatch, WorkerOutput,
};
pub use train::{
    scheduled_task, train, write_metrics_line, IterationMetrics, TrainConfig, TrainMode, Trainer, THREADS_ENV,
};

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_ROLLOUT: u64 = 1;
pub(crate) const STREAM_UPDATE: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("non-finite PPO loss; update aborted")]
    NonFiniteLoss,
    #[error("checkpoint does not match the configured run: {0}")]
    CheckpointMismatch(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Generator for one purpose within one iteration.
pub fn stream_rng(seed: u64, iteration: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, iteration, index, purpose]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
