use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{ControlMode, EnvConfig};
use crate::neuralnet::{PolicyArch, PolicyInit};
use crate::physics::RobotModel;
use crate::sensors::LidarConfig;
use crate::terrain::{TaskDistribution, TaskSpec, TerrainType};
use crate::trainer::{PpoConfig, TrainConfig, TrainMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perception {
    #[default]
    Lidar,
    Blind,
}

/// One choice per ablation axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeFlags {
    pub control: ControlMode,
    pub perception: Perception,
    pub training: TrainMode,
}

/// Episode settings; the robot, LiDAR and mode live in their own sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSection {
    pub physics_dt: f64,
    pub action_repeat: usize,
    pub max_steps: usize,
    pub success_radius: f64,
    pub goal_distance: [f64; 2],
    pub start_offset: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cell_size: f64,
    pub settle_steps: usize,
    pub proprio_noise: f64,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            physics_dt: e.physics_dt,
            action_repeat: e.action_repeat,
            max_steps: e.max_steps,
            success_radius: e.success_radius,
            goal_distance: e.goal_distance,
            start_offset: e.start_offset,
            grid_rows: e.grid_rows,
            grid_cols: e.grid_cols,
            cell_size: e.cell_size,
            settle_steps: e.settle_steps,
            proprio_noise: e.proprio_noise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Write a checkpoint every this many iterations (0: final only).
    pub checkpoint_every: u64,
    /// Sequential-mode task period in env steps.
    pub switch_every: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { checkpoint_every: 10, switch_every: None }
    }
}

/// A training task: terrain type, sampling weight and parameter intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub terrain: TerrainType,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
}

/// A named cell of the evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalEntry {
    pub name: String,
    pub terrain: TerrainType,
    /// Counts toward the held-out mean.
    #[serde(default = "yes")]
    pub held_out: bool,
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn spec(terrain: TerrainType, bounds: &BTreeMap<String, [f64; 2]>) -> TaskSpec {
    bounds.iter().fold(TaskSpec::new(terrain), |s, (k, [lo, hi])| s.bound(k, *lo, *hi))
}

impl TaskEntry {
    pub fn new(terrain: TerrainType, bounds: &[(&str, [f64; 2])]) -> Self {
        Self { terrain, weight: 1.0, bounds: bounds.iter().map(|(k, b)| (k.to_string(), *b)).collect() }
    }

    pub fn spec(&self) -> TaskSpec {
        spec(self.terrain, &self.bounds)
    }
}

impl EvalEntry {
    pub fn new(name: &str, terrain: TerrainType, held_out: bool, bounds: &[(&str, [f64; 2])]) -> Self {
        Self {
            name: name.to_string(),
            terrain,
            held_out,
            bounds: bounds.iter().map(|(k, b)| (k.to_string(), *b)).collect(),
        }
    }

    pub fn spec(&self) -> TaskSpec {
        spec(self.terrain, &self.bounds)
    }
}

/// Flat, Rugged, Obstacles and Stairs at moderate difficulty.
pub fn default_tasks() -> Vec<TaskEntry> {
    use TerrainType::*;
    vec![
        TaskEntry::new(Flat, &[]),
        TaskEntry::new(Rugged, &[("h_min", [-0.04, 0.0]), ("h_max", [0.0, 0.04]), ("sigma", [1.0, 2.0])]),
        TaskEntry::new(Obstacles, &[("n", [20.0, 60.0]), ("h", [0.02, 0.08])]),
        TaskEntry::new(Stairs, &[("h", [0.02, 0.05]), ("l", [0.6, 1.0])]),
    ]
}

/// Obstacles (a trained type) plus the held-out cells: unseen Hills and
/// Cliff, and Rugged beyond the training range.
pub fn default_eval() -> Vec<EvalEntry> {
    use TerrainType::*;
    vec![
        EvalEntry::new("obstacles", Obstacles, false, &[("n", [40.0, 80.0]), ("h", [0.04, 0.08])]),
        EvalEntry::new("hills", Hills, true, &[("k", [3.0, 8.0]), ("amplitude", [0.1, 0.3]), ("radius", [1.0, 2.5])]),
        EvalEntry::new("cliff", Cliff, true, &[("w_walk", [6.0, 10.0]), ("cliff_depth", [-1.0, -0.5])]),
        EvalEntry::new(
            "rugged_hard",
            Rugged,
            true,
            &[("h_min", [-0.08, -0.04]), ("h_max", [0.04, 0.08]), ("sigma", [1.0, 2.0])],
        ),
    ]
}

/// Everything a `train`, `eval`, `ablate` or `replay` invocation needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub mode: ModeFlags,
    pub robot: RobotModel,
    pub lidar: LidarConfig,
    pub episode: EpisodeSection,
    pub ppo: PpoConfig,
    pub network: PolicyArch,
    pub init: PolicyInit,
    pub train: TrainSection,
    pub tasks: Vec<TaskEntry>,
    pub eval: Vec<EvalEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            mode: ModeFlags::default(),
            robot: RobotModel::default(),
            lidar: LidarConfig::default(),
            episode: EpisodeSection::default(),
            ppo: PpoConfig::default(),
            network: PolicyArch::default(),
            init: PolicyInit::default(),
            train: TrainSection::default(),
            tasks: default_tasks(),
            eval: default_eval(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| HarnessError::Config(m);
        self.train_config().validate().map_err(|e| cfg(e.to_string()))?;
        if self.tasks.is_empty() {
            return Err(cfg("tasks: at least one training task is required".into()));
        }
        self.distribution().map_err(|e| cfg(format!("tasks: {e}")))?;
        for (k, e) in self.eval.iter().enumerate() {
            e.spec().validate().map_err(|err| cfg(format!("eval[{k}] ({}): {err}", e.name)))?;
        }
        let mut names: Vec<&str> = self.eval.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(cfg("eval: cell names must be unique".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.episode;
        EnvConfig {
            physics_dt: e.physics_dt,
            action_repeat: e.action_repeat,
            max_steps: e.max_steps,
            success_radius: e.success_radius,
            goal_distance: e.goal_distance,
            start_offset: e.start_offset,
            grid_rows: e.grid_rows,
            grid_cols: e.grid_cols,
            cell_size: e.cell_size,
            settle_steps: e.settle_steps,
            control: self.mode.control,
            blind: self.mode.perception == Perception::Blind,
            proprio_noise: e.proprio_noise,
            lidar: self.lidar.clone(),
            robot: self.robot.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            ppo: self.ppo.clone(),
            env: self.env_config(),
            arch: self.network.clone(),
            init: self.init.clone(),
            mode: self.mode.training,
            switch_every: self.train.switch_every,
        }
    }

    pub fn distribution(&self) -> Result<TaskDistribution, HarnessError> {
        Ok(TaskDistribution::new(self.tasks.iter().map(|t| (t.spec(), t.weight)).collect())?)
    }
}
