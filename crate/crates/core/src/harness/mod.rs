//! Run configuration, greedy evaluation suites, ablation orchestration and
//! the file plumbing behind the `terragym` command line.

mod ablate;
mod config;
mod eval;
mod run;

use thiserror::Error;

use crate::env::EnvError;
use crate::neuralnet::NetError;
use crate::terrain::TerrainError;
use crate::trainer::TrainError;

pub use ablate::{ablate, AblationTable, Variant, VARIANTS};
pub use config::{
    default_eval, default_tasks, EpisodeSection, EvalEntry, ModeFlags, Perception, RunConfig, TaskEntry,
    TrainSection,
};
pub use eval::{
    episode_seed, evaluate, replay, run_episode, CellStats, ConstantPolicy, EpisodeRecord, EvalPolicy, EvalReport,
    GreedyPolicy, TeleportPolicy, CSV_HEADER,
};
pub use run::{checkpoint_env_config, run_train, TrainOutputs, CONFIG_FILE, FINAL_CHECKPOINT, METRICS_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint does not fit the run: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    /// 2 for usage and config errors, 3 for bad data or checkpoints, 4 for
    /// faults during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Train(TrainError::InvalidConfig(_)) => 2,
            HarnessError::Env(EnvError::InvalidConfig(_)) => 2,
            HarnessError::Terrain(
                TerrainError::UnknownTerrainType(_)
                | TerrainError::UnexpectedParameter { .. }
                | TerrainError::MissingParameter { .. },
            ) => 2,
            HarnessError::Mismatch(_) => 3,
            HarnessError::Train(TrainError::CheckpointMismatch(_)) => 3,
            HarnessError::Net(_) | HarnessError::Train(TrainError::Net(_)) => 3,
            HarnessError::Io { .. } => 3,
            _ => 4,
        }
    }
}
