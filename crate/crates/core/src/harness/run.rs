use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::HarnessError;
use crate::env::{ControlMode, EnvConfig};
use crate::neuralnet::Checkpoint;
use crate::trainer::{write_metrics_line, IterationMetrics, Trainer};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub struct TrainOutputs {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<IterationMetrics>,
    pub final_path: PathBuf,
}

fn periodic_name(iteration: u64) -> String {
    format!("iter_{iteration:06}.ckpt")
}

fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), HarnessError> {
    ckpt.save(path).map_err(|e| match e {
        crate::neuralnet::NetError::Io(io) => HarnessError::io(path, io),
        other => other.into(),
    })
}

/// Trains per `cfg`, writing into `out_dir`: the config as run, one metrics
/// line per iteration, a checkpoint every `train.checkpoint_every`
/// iterations, and the final checkpoint. With `resume`, training continues
/// from that checkpoint and metrics are appended.
pub fn run_train(
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Checkpoint>,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<TrainOutputs, HarnessError> {
    cfg.validate()?;
    let dist = cfg.distribution()?;
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(cfg.train_config(), dist, ckpt)?,
        None => Trainer::new(cfg.train_config(), dist, cfg.seed)?,
    };
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let config_path = out_dir.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_toml()).map_err(|e| HarnessError::io(&config_path, e))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&metrics_path)
        .map_err(|e| HarnessError::io(&metrics_path, e))?;
    let mut metrics_out = BufWriter::new(file);

    let every = cfg.train.checkpoint_every;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        let m = trainer.step()?;
        write_metrics_line(&m, &mut metrics_out)
            .and_then(|_| metrics_out.flush())
            .map_err(|e| HarnessError::io(&metrics_path, e))?;
        on_iteration(&m);
        metrics.push(m);
        if every > 0 && trainer.iteration() % every == 0 && !trainer.is_finished() {
            save(&trainer.checkpoint(), &out_dir.join(periodic_name(trainer.iteration())))?;
        }
    }
    let checkpoint = trainer.checkpoint();
    let final_path = out_dir.join(FINAL_CHECKPOINT);
    save(&checkpoint, &final_path)?;
    Ok(TrainOutputs { checkpoint, metrics, final_path })
}

/// Episode settings from `cfg` with the control mode and perception taken
/// from the checkpoint header. Fails if the observation layout the settings
/// produce differs from the one the network was trained on.
pub fn checkpoint_env_config(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<EnvConfig, HarnessError> {
    let control = [ControlMode::Pmtg, ControlMode::Reactive]
        .into_iter()
        .find(|c| c.action_dim() == ckpt.header.action_dim)
        .ok_or_else(|| HarnessError::Mismatch(format!("no control mode has action dimension {}", ckpt.header.action_dim)))?;
    let env = EnvConfig { control, blind: ckpt.header.blind, ..cfg.env_config() };
    if env.layout() != ckpt.obs_layout() {
        return Err(HarnessError::Mismatch(format!(
            "config gives observation layout {:?} but the checkpoint expects {:?}",
            env.layout(),
            ckpt.obs_layout()
        )));
    }
    Ok(env)
}
