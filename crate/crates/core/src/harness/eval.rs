use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::EvalEntry;
use super::HarnessError;
use crate::env::{Env, EnvConfig, EnvError, Observation, TraceRecord};
use crate::neuralnet::PolicyNet;
use crate::terrain::{TaskSpec, TerrainType};
use crate::trainer::stream_rng;

pub const CSV_HEADER: [&str; 6] = ["terrain", "episode", "seed", "tcr", "success", "steps"];

const STREAM_EVAL: u64 = 3;
/// Seeds tried per episode before a start-placement failure is fatal.
const SEED_TRIES: u64 = 8;

/// Chooses the action for the current observation. Implementations may
/// also touch the environment, which is how test doubles cheat.
pub trait EvalPolicy: Sync {
    fn action(&self, env: &mut Env, obs: &Observation) -> Result<Vec<f64>, HarnessError>;
}

/// Executes the policy mean.
pub struct GreedyPolicy<'a> {
    pub net: &'a PolicyNet,
    pub params: &'a [f64],
}

impl EvalPolicy for GreedyPolicy<'_> {
    fn action(&self, _env: &mut Env, obs: &Observation) -> Result<Vec<f64>, HarnessError> {
        Ok(self.net.act(self.params, &obs.data)?.0)
    }
}

/// The same action every step.
pub struct ConstantPolicy(pub Vec<f64>);

impl EvalPolicy for ConstantPolicy {
    fn action(&self, _env: &mut Env, _obs: &Observation) -> Result<Vec<f64>, HarnessError> {
        Ok(self.0.clone())
    }
}

/// Moves the torso above the goal, keeping its height over the ground,
/// then sends a zero action.
pub struct TeleportPolicy;

impl EvalPolicy for TeleportPolicy {
    fn action(&self, env: &mut Env, _obs: &Observation) -> Result<Vec<f64>, HarnessError> {
        let goal = env.goal();
        let p = env.state().position;
        let clearance = p.z - env.field().height_at(p.x, p.y);
        env.state_mut().position = Vector3::new(goal.x, goal.y, goal.z + clearance);
        Ok(vec![0.0; env.config().action_dim()])
    }
}

/// One row of the evaluation CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub terrain: String,
    pub episode: usize,
    pub seed: u64,
    pub tcr: f64,
    pub success: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub name: String,
    pub terrain: TerrainType,
    pub held_out: bool,
    pub episodes: usize,
    pub mean_tcr: f64,
    /// Population standard deviation.
    pub std_tcr: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellStats>,
    pub records: Vec<EpisodeRecord>,
}

impl EvalReport {
    fn from_records(suite: &[EvalEntry], records: Vec<EpisodeRecord>) -> Self {
        let cells = suite
            .iter()
            .map(|e| {
                let rows: Vec<&EpisodeRecord> = records.iter().filter(|r| r.terrain == e.name).collect();
                let n = rows.len() as f64;
                let mean = rows.iter().map(|r| r.tcr).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r.tcr - mean).powi(2)).sum::<f64>() / n;
                CellStats {
                    name: e.name.clone(),
                    terrain: e.terrain,
                    held_out: e.held_out,
                    episodes: rows.len(),
                    mean_tcr: mean,
                    std_tcr: var.sqrt(),
                    success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
                }
            })
            .collect();
        Self { cells, records }
    }

    pub fn cell(&self, name: &str) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.name == name)
    }

    /// Mean of the per-cell means.
    pub fn overall_mean(&self) -> f64 {
        mean(self.cells.iter().map(|c| c.mean_tcr))
    }

    /// Mean of the per-cell means over held-out cells; NaN if there are none.
    pub fn held_out_mean(&self) -> f64 {
        mean(self.cells.iter().filter(|c| c.held_out).map(|c| c.mean_tcr))
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>9} {:>7} {:>8} {:>8}", "terrain", "mean tcr", "std", "success", "episodes");
        for c in &self.cells {
            let mark = if c.held_out { "*" } else { "" };
            let _ = writeln!(
                s,
                "{:<16} {:>9.3} {:>7.3} {:>7.0}% {:>8}",
                format!("{}{mark}", c.name),
                c.mean_tcr,
                c.std_tcr,
                100.0 * c.success_rate,
                c.episodes
            );
        }
        let _ = writeln!(s, "{:<16} {:>9.3}", "overall", self.overall_mean());
        if self.cells.iter().any(|c| c.held_out) {
            let _ = writeln!(s, "{:<16} {:>9.3}", "held-out mean", self.held_out_mean());
        }
        s
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Seed of episode `episode` in cell `cell`, retry `attempt`.
pub fn episode_seed(seed: u64, cell: usize, episode: usize, attempt: u64) -> u64 {
    let mut rng = stream_rng(seed, cell as u64, episode as u64, STREAM_EVAL);
    for _ in 0..attempt {
        rng.next_u64();
    }
    rng.next_u64()
}

/// Runs one episode to termination. Returns the final environment so
/// callers can read its statistics or trace.
pub fn run_episode(
    policy: &dyn EvalPolicy,
    task: &TaskSpec,
    config: &Arc<EnvConfig>,
    seed: u64,
    trace: bool,
) -> Result<(Env, bool), HarnessError> {
    let (mut env, mut obs) = Env::reset_with_task(&task.clone().with_seed(seed), Arc::clone(config), seed)?;
    if trace {
        env.enable_trace();
    }
    loop {
        let action = policy.action(&mut env, &obs)?;
        let step = env.step(&action)?;
        obs = step.observation;
        if step.done {
            return Ok((env, step.info.success));
        }
    }
}

fn eval_episode(
    policy: &dyn EvalPolicy,
    entry: &EvalEntry,
    config: &Arc<EnvConfig>,
    seed: u64,
    cell: usize,
    episode: usize,
) -> Result<EpisodeRecord, HarnessError> {
    let task = entry.spec();
    for attempt in 0..SEED_TRIES {
        let s = episode_seed(seed, cell, episode, attempt);
        match run_episode(policy, &task, config, s, false) {
            Ok((env, success)) => {
                return Ok(EpisodeRecord {
                    terrain: entry.name.clone(),
                    episode,
                    seed: s,
                    tcr: env.tcr(),
                    success,
                    steps: env.steps(),
                })
            }
            Err(HarnessError::Env(EnvError::StartPlacement(_))) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(HarnessError::Env(EnvError::StartPlacement(SEED_TRIES as usize)))
}

/// `episodes` greedy episodes per suite cell. Episode seeds depend only on
/// `(seed, cell, episode)`, so the report is independent of thread count.
pub fn evaluate(
    policy: &dyn EvalPolicy,
    suite: &[EvalEntry],
    config: &Arc<EnvConfig>,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be >= 1".into()));
    }
    if suite.is_empty() {
        return Err(HarnessError::Config("eval suite is empty".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..suite.len()).flat_map(|c| (0..episodes).map(move |e| (c, e))).collect();
    let run = |&(c, e): &(usize, usize)| eval_episode(policy, &suite[c], config, seed, c, e);
    #[cfg(feature = "parallel")]
    let records: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Result<Vec<_>, _> = jobs.iter().map(run).collect();
    Ok(EvalReport::from_records(suite, records?))
}

/// Greedy episode with per-step tracing.
pub fn replay(
    policy: &dyn EvalPolicy,
    task: &TaskSpec,
    config: &Arc<EnvConfig>,
    seed: u64,
) -> Result<(EpisodeRecord, Vec<TraceRecord>), HarnessError> {
    let (mut env, success) = run_episode(policy, task, config, seed, true)?;
    let record = EpisodeRecord {
        terrain: task.terrain_type.name().to_string(),
        episode: 0,
        seed,
        tcr: env.tcr(),
        success,
        steps: env.steps(),
    };
    Ok((record, env.take_trace()))
}
