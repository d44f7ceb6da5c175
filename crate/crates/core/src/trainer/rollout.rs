use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stream_rng, TrainError, STREAM_ROLLOUT};
use crate::env::{Env, EnvConfig, EnvError, Observation};
use crate::neuralnet::{gaussian_log_prob, PolicyNet};
use crate::terrain::{TaskDistribution, TaskSpec, TerrainType};

/// Reset attempts per episode before the worker gives up on its segment.
const RESET_TRIES: usize = 8;

/// Outcome of one finished (or horizon-truncated) episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub terrain: TerrainType,
    pub episode_return: f64,
    pub tcr: f64,
    pub steps: usize,
    pub success: bool,
    /// Ended by termination rather than by the rollout horizon.
    pub finished: bool,
}

/// One worker's contiguous run of control steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segment {
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Observation after the last step when the segment ends mid-episode.
    pub bootstrap: Option<Vec<f64>>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn truncate(&mut self, steps: usize, obs_dim: usize, action_dim: usize) {
        self.observations.truncate(steps * obs_dim);
        self.actions.truncate(steps * action_dim);
        self.log_probs.truncate(steps);
        self.rewards.truncate(steps);
        self.dones.truncate(steps);
    }
}

/// Per-step records for W workers, concatenated in worker order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Step counts of the worker segments, in worker order.
    pub segment_lengths: Vec<usize>,
    pub episodes: Vec<EpisodeSummary>,
    /// Episodes discarded after a physics fault or failed reset.
    pub faults: usize,
    /// Control steps simulated, including discarded ones.
    pub env_steps: u64,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, k: usize) -> &[f64] {
        &self.observations[k * self.obs_dim..(k + 1) * self.obs_dim]
    }

    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.action_dim..(k + 1) * self.action_dim]
    }
}

/// Everything one worker produced in one collection round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkerOutput {
    pub segment: Segment,
    pub episodes: Vec<EpisodeSummary>,
    pub faults: usize,
    pub env_steps: u64,
}

/// Draws `mean + exp(log_std) * eps` and its log-density.
pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut impl RngCore) -> (Vec<f64>, f64) {
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let eps: f64 = StandardNormal.sample(rng);
            m + ls.exp() * eps
        })
        .collect();
    let log_prob = gaussian_log_prob(mean, log_std, &action);
    (action, log_prob)
}

fn summary(env: &Env, finished: bool, success: bool) -> EpisodeSummary {
    EpisodeSummary {
        terrain: env.task().terrain_type,
        episode_return: env.reward_sum(),
        tcr: env.tcr(),
        steps: env.steps(),
        success,
        finished,
    }
}

fn start_episode(
    dist: &TaskDistribution,
    config: &Arc<EnvConfig>,
    rng: &mut ChaCha8Rng,
    out: &mut WorkerOutput,
) -> Result<Option<(Env, Observation)>, TrainError> {
    for _ in 0..RESET_TRIES {
        match Env::reset(dist, Arc::clone(config), rng.next_u64()) {
            Ok(started) => return Ok(Some(started)),
            Err(EnvError::StartPlacement(_) | EnvError::Physics(_)) => out.faults += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(None)
}

/// Runs one worker for `horizon` control steps, starting a fresh episode at
/// the beginning and after every termination. An episode that ends in a
/// physics fault is dropped from the segment.
pub fn run_worker(
    net: &PolicyNet,
    params: &[f64],
    dist: &TaskDistribution,
    config: &Arc<EnvConfig>,
    horizon: usize,
    mut rng: ChaCha8Rng,
) -> Result<WorkerOutput, TrainError> {
    let (obs_dim, action_dim) = (net.layout.dim(), net.action_dim());
    let mut out = WorkerOutput::default();
    let mut current = start_episode(dist, config, &mut rng, &mut out)?;
    let mut episode_start = 0;
    while out.env_steps < horizon as u64 {
        let Some((env, obs)) = current.as_mut() else { break };
        let (mean, log_std) = net.act(params, &obs.data)?;
        let (action, log_prob) = sample_action(&mean, &log_std, &mut rng);
        let step = env.step(&action)?;
        out.env_steps += 1;
        let seg = &mut out.segment;
        seg.observations.extend_from_slice(&obs.data);
        seg.actions.extend_from_slice(&action);
        seg.log_probs.push(log_prob);
        seg.rewards.push(step.reward);
        seg.dones.push(step.done);
        *obs = step.observation;
        if step.info.fault {
            out.faults += 1;
            out.segment.truncate(episode_start, obs_dim, action_dim);
        } else if step.done {
            out.episodes.push(summary(env, true, step.info.success));
        }
        if step.done {
            episode_start = out.segment.len();
            if out.env_steps < horizon as u64 {
                current = start_episode(dist, config, &mut rng, &mut out)?;
            } else {
                current = None;
            }
        }
    }
    if let Some((env, obs)) = current {
        if out.segment.len() > episode_start {
            out.segment.bootstrap = Some(obs.data);
            out.episodes.push(summary(&env, false, false));
        }
    }
    Ok(out)
}

/// Runs `workers` independent workers; worker `w` draws from the random
/// stream keyed by `(seed, iteration, w)`, so the result does not depend on
/// the thread count.
pub fn collect_segments(
    net: &PolicyNet,
    params: &[f64],
    dist: &TaskDistribution,
    config: &Arc<EnvConfig>,
    workers: usize,
    horizon: usize,
    seed: u64,
    iteration: u64,
) -> Result<Vec<WorkerOutput>, TrainError> {
    let run = |w: usize| run_worker(net, params, dist, config, horizon, stream_rng(seed, iteration, w as u64, STREAM_ROLLOUT));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..workers).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..workers).map(run).collect()
    }
}

/// Concatenates worker outputs in worker order. Values and advantages are
/// left empty for the learner to fill.
pub fn assemble(outputs: Vec<WorkerOutput>, obs_dim: usize, action_dim: usize) -> (TrajectoryBatch, Vec<Option<Vec<f64>>>) {
    let mut batch = TrajectoryBatch {
        obs_dim,
        action_dim,
        observations: Vec::new(),
        actions: Vec::new(),
        log_probs: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        values: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
        segment_lengths: Vec::new(),
        episodes: Vec::new(),
        faults: 0,
        env_steps: 0,
    };
    let mut bootstraps = Vec::with_capacity(outputs.len());
    for out in outputs {
        let s = out.segment;
        batch.segment_lengths.push(s.len());
        batch.observations.extend(s.observations);
        batch.actions.extend(s.actions);
        batch.log_probs.extend(s.log_probs);
        batch.rewards.extend(s.rewards);
        batch.dones.extend(s.dones);
        batch.episodes.extend(out.episodes);
        batch.faults += out.faults;
        batch.env_steps += out.env_steps;
        bootstraps.push(s.bootstrap);
    }
    (batch, bootstraps)
}

/// Greedy (mean-action) episode on a fixed task.
pub fn run_greedy_episode(
    net: &PolicyNet,
    params: &[f64],
    task: &TaskSpec,
    config: &Arc<EnvConfig>,
    seed: u64,
) -> Result<EpisodeSummary, TrainError> {
    let (mut env, mut obs) = Env::reset_with_task(task, Arc::clone(config), seed)?;
    loop {
        let (mean, _) = net.act(params, &obs.data)?;
        let step = env.step(&mean)?;
        obs = step.observation;
        if step.done {
            return Ok(summary(&env, true, step.info.success));
        }
    }
}
