use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::gae::compute_gae;
use super::ppo::{ppo_update, PpoConfig};
use super::rollout::{assemble, collect_segments, TrajectoryBatch};
use super::{stream_rng, TrainError, STREAM_INIT, STREAM_UPDATE};
use crate::env::EnvConfig;
use crate::neuralnet::{Adam, Checkpoint, PolicyArch, PolicyInit, PolicyNet};
use crate::terrain::TaskDistribution;

/// Caps the rollout thread pool. The worker count W, and therefore the
/// result of a run, is unaffected.
pub const THREADS_ENV: &str = "TERRAGYM_THREADS";

const VALUE_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// A fresh task is sampled from the distribution at every episode.
    #[default]
    Multitask,
    /// One distribution entry at a time, cycling every `switch_every` steps.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub arch: PolicyArch,
    pub init: PolicyInit,
    pub mode: TrainMode,
    /// Sequential-mode task period in env steps; defaults to
    /// `total_steps / (tasks * 3)`.
    pub switch_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            arch: PolicyArch::default(),
            init: PolicyInit::default(),
            mode: TrainMode::Multitask,
            switch_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.ppo.validate()?;
        self.env.validate()?;
        if self.switch_every == Some(0) {
            return Err(TrainError::InvalidConfig("switch_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_net(&self) -> Result<PolicyNet, TrainError> {
        Ok(PolicyNet::new(self.env.layout(), &self.arch, self.env.blind)?)
    }

    pub fn switch_every(&self, tasks: usize) -> u64 {
        self.switch_every.unwrap_or_else(|| (self.ppo.total_steps / (3 * tasks.max(1) as u64)).max(1))
    }
}

/// One record of the metrics stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: u64,
    pub env_steps: u64,
    pub mean_return: f64,
    pub mean_tcr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
}

pub fn write_metrics_line(m: &IterationMetrics, mut out: impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, m)?;
    out.write_all(b"\n")
}

/// Index of the distribution entry trained on after `env_steps` steps.
pub fn scheduled_task(env_steps: u64, switch_every: u64, tasks: usize) -> usize {
    ((env_steps / switch_every.max(1)) % tasks.max(1) as u64) as usize
}

/// Learner state between iterations.
pub struct Trainer {
    config: TrainConfig,
    env_config: Arc<EnvConfig>,
    dist: TaskDistribution,
    net: PolicyNet,
    params: Vec<f64>,
    adam: Adam,
    seed: u64,
    iteration: u64,
    env_steps: u64,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(config: TrainConfig, dist: TaskDistribution, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        dist.validate()?;
        let net = config.build_net()?;
        let params = net.init_params(&config.init, &mut stream_rng(seed, 0, 0, STREAM_INIT));
        let adam = Adam::new(params.len());
        Self::assemble(config, dist, net, params, adam, seed, 0, 0)
    }

    /// Continues the run saved in `ckpt`; `config` must describe the same network.
    pub fn resume(config: TrainConfig, dist: TaskDistribution, ckpt: &Checkpoint) -> Result<Self, TrainError> {
        config.validate()?;
        dist.validate()?;
        let net = config.build_net()?;
        if net.layout_map() != ckpt.layout_map || net.layout != ckpt.obs_layout() || net.blind != ckpt.header.blind {
            return Err(TrainError::CheckpointMismatch(format!(
                "config network {:?} vs checkpoint {:?}",
                net.layout_map(),
                ckpt.layout_map
            )));
        }
        Self::assemble(
            config,
            dist,
            net,
            ckpt.params.clone(),
            ckpt.adam.clone(),
            ckpt.rng_state,
            ckpt.header.iteration,
            ckpt.header.env_steps,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: TrainConfig,
        dist: TaskDistribution,
        net: PolicyNet,
        params: Vec<f64>,
        adam: Adam,
        seed: u64,
        iteration: u64,
        env_steps: u64,
    ) -> Result<Self, TrainError> {
        Ok(Self {
            env_config: Arc::new(config.env.clone()),
            config,
            dist,
            net,
            params,
            adam,
            seed,
            iteration,
            env_steps,
            #[cfg(feature = "parallel")]
            pool: thread_pool()?,
        })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.config.ppo.total_steps
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.net, self.params.clone(), self.adam.clone(), self.seed, self.iteration, self.env_steps)
    }

    /// Tasks the next iteration samples from.
    pub fn current_distribution(&self) -> TaskDistribution {
        match self.config.mode {
            TrainMode::Multitask => self.dist.clone(),
            TrainMode::Sequential => {
                let n = self.dist.len();
                let k = scheduled_task(self.env_steps, self.config.switch_every(n), n);
                TaskDistribution::single(self.dist.entries[k].0.clone())
            }
        }
    }

    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(f);
        }
        f()
    }

    /// Collects one batch and applies one PPO update.
    pub fn step(&mut self) -> Result<IterationMetrics, TrainError> {
        let ppo = &self.config.ppo;
        let dist = self.current_distribution();
        let outputs = self.run(|| {
            collect_segments(&self.net, &self.params, &dist, &self.env_config, ppo.workers, ppo.horizon, self.seed, self.iteration)
        })?;
        let (mut batch, bootstraps) = assemble(outputs, self.net.layout.dim(), self.net.action_dim());
        self.run(|| fill_advantages(&self.net, &self.params, &mut batch, &bootstraps, ppo))?;

        let mut rng = stream_rng(self.seed, self.iteration, 0, STREAM_UPDATE);
        let (net, params, adam) = (&self.net, &mut self.params, &mut self.adam);
        let stats = {
            #[cfg(feature = "parallel")]
            if let Some(pool) = &self.pool {
                pool.install(|| ppo_update(net, params, adam, &batch, ppo, &mut rng))
            } else {
                ppo_update(net, params, adam, &batch, ppo, &mut rng)
            }
            #[cfg(not(feature = "parallel"))]
            ppo_update(net, params, adam, &batch, ppo, &mut rng)
        }?;

        let finished: Vec<_> = batch.episodes.iter().filter(|e| e.finished).collect();
        let pool: Vec<_> = if finished.is_empty() { batch.episodes.iter().collect() } else { finished };
        let mean = |f: &dyn Fn(&super::EpisodeSummary) -> f64| {
            if pool.is_empty() {
                0.0
            } else {
                pool.iter().map(|e| f(e)).sum::<f64>() / pool.len() as f64
            }
        };
        self.env_steps += batch.env_steps;
        let metrics = IterationMetrics {
            iter: self.iteration,
            env_steps: self.env_steps,
            mean_return: mean(&|e| e.episode_return),
            mean_tcr: mean(&|e| e.tcr),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            kl: stats.kl,
        };
        self.iteration += 1;
        Ok(metrics)
    }
}

#[cfg(feature = "parallel")]
fn thread_pool() -> Result<Option<rayon::ThreadPool>, TrainError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| TrainError::InvalidConfig(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| TrainError::ThreadPool(e.to_string()))
}

fn values_of(net: &PolicyNet, params: &[f64], obs: ArrayView2<f64>) -> Result<Vec<f64>, TrainError> {
    let work = |start: usize| -> Result<Vec<f64>, TrainError> {
        let rows = obs.slice(ndarray::s![start..(start + VALUE_CHUNK).min(obs.nrows()), ..]);
        Ok(net.forward(params, rows)?.value.to_vec())
    };
    let starts: Vec<usize> = (0..obs.nrows()).step_by(VALUE_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = {
        use rayon::prelude::*;
        starts.par_iter().map(|&s| work(s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = starts.iter().map(|&s| work(s)).collect();
    let mut out = Vec::with_capacity(obs.nrows());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Values, advantages and returns for every segment of `batch`.
fn fill_advantages(
    net: &PolicyNet,
    params: &[f64],
    batch: &mut TrajectoryBatch,
    bootstraps: &[Option<Vec<f64>>],
    ppo: &PpoConfig,
) -> Result<(), TrainError> {
    let obs = ArrayView2::from_shape((batch.len(), batch.obs_dim), &batch.observations).unwrap();
    batch.values = values_of(net, params, obs)?;
    let boot_rows: Vec<&Vec<f64>> = bootstraps.iter().flatten().collect();
    let mut boot_obs = Array2::zeros((boot_rows.len(), batch.obs_dim));
    for (i, row) in boot_rows.iter().enumerate() {
        boot_obs.row_mut(i).assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    let boot_values = if boot_rows.is_empty() { Vec::new() } else { values_of(net, params, boot_obs.view())? };
    let mut boot_iter = boot_values.into_iter();

    batch.advantages.clear();
    batch.returns.clear();
    let mut start = 0;
    for (len, boot) in batch.segment_lengths.iter().zip(bootstraps) {
        let r = start..start + len;
        let bootstrap = if boot.is_some() { boot_iter.next().unwrap() } else { 0.0 };
        let (adv, ret) =
            compute_gae(&batch.rewards[r.clone()], &batch.values[r.clone()], &batch.dones[r], bootstrap, ppo.gamma, ppo.lambda);
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
        start += len;
    }
    Ok(())
}

/// Runs iterations until the step budget is spent. `on_iteration` sees the
/// trainer after each update, e.g. to write metrics or checkpoints.
pub fn train(
    config: TrainConfig,
    dist: TaskDistribution,
    seed: u64,
    mut on_iteration: impl FnMut(&Trainer, &IterationMetrics) -> Result<(), TrainError>,
) -> Result<(Checkpoint, Vec<IterationMetrics>), TrainError> {
    let mut trainer = Trainer::new(config, dist, seed)?;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        let m = trainer.step()?;
        on_iteration(&trainer, &m)?;
        metrics.push(m);
    }
    Ok((trainer.checkpoint(), metrics))
}
