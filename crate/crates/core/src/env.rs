//! Point-goal locomotion episodes over sampled terrains.

use std::io::Write;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{
    is_fallen, nominal_pose, settle, step_lowlevel, PhysicsError, RobotModel, RobotState, NUM_JOINTS,
};
use crate::pmtg::{self, TGParams, TGState, RESIDUAL_LIMIT, TG_STATE_DIM};
use crate::sensors::{goal_sensor, proprioception, raycast_scan, LidarConfig, SensorError};
use crate::terrain::{generate_with, GridGeometry, Heightfield, TaskDistribution, TaskSpec, TerrainError};

/// Reactive mode maps the normalized action `u` to `q_nominal + REACTIVE_SCALE * u`.
pub const REACTIVE_SCALE: f64 = 0.8;
pub const PMTG_ACTION_DIM: usize = 3 + NUM_JOINTS;
pub const REACTIVE_ACTION_DIM: usize = NUM_JOINTS;
/// Proprioceptive block: omega, q, roll, pitch.
pub const PROPRIO_DIM: usize = 3 + NUM_JOINTS + 2;
const START_TRIES: usize = 100;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("no clear start cell after {0} tries")]
    StartPlacement(usize),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("action has {got} entries, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("action contains non-finite values")]
    NonFiniteAction,
    #[error("initial goal distance must be > 0, got {0}")]
    NonPositiveDistance(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// TG parameters plus joint residual.
    #[default]
    Pmtg,
    /// Joint targets directly, no TG.
    Reactive,
}

impl ControlMode {
    pub fn action_dim(self) -> usize {
        match self {
            ControlMode::Pmtg => PMTG_ACTION_DIM,
            ControlMode::Reactive => REACTIVE_ACTION_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub physics_dt: f64,
    pub action_repeat: usize,
    /// Episode length T in control steps.
    pub max_steps: usize,
    /// Success radius r_g.
    pub success_radius: f64,
    /// Start-to-goal distance interval, meters.
    pub goal_distance: [f64; 2],
    /// Start x, measured from the grid's -x edge.
    pub start_offset: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cell_size: f64,
    /// Physics ticks spent holding the nominal pose before the first observation.
    pub settle_steps: usize,
    pub control: ControlMode,
    /// Zero the LiDAR block instead of raycasting.
    pub blind: bool,
    pub proprio_noise: f64,
    pub lidar: LidarConfig,
    pub robot: RobotModel,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            physics_dt: 1e-3,
            action_repeat: 10,
            max_steps: 1000,
            success_radius: 0.5,
            goal_distance: [6.0, 10.0],
            start_offset: 1.5,
            grid_rows: 64,
            grid_cols: 64,
            cell_size: 0.25,
            settle_steps: 300,
            control: ControlMode::Pmtg,
            blind: false,
            proprio_noise: 0.0,
            lidar: LidarConfig::default(),
            robot: RobotModel::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |what: &str| Err(EnvError::InvalidConfig(what.to_string()));
        if !(self.physics_dt > 0.0 && self.physics_dt.is_finite()) {
            return bad("physics_dt must be > 0");
        }
        if self.action_repeat == 0 {
            return bad("action_repeat must be >= 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        if !(self.success_radius > 0.0) {
            return bad("success_radius must be > 0");
        }
        let [lo, hi] = self.goal_distance;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("goal_distance needs 0 < low <= high");
        }
        if self.grid_rows < 2 || self.grid_cols < 2 || !(self.cell_size > 0.0) {
            return bad("grid needs at least 2x2 cells of positive size");
        }
        if !(self.proprio_noise >= 0.0) {
            return bad("proprio_noise must be >= 0");
        }
        self.lidar.validate()?;
        self.robot.validate()?;
        Ok(())
    }

    /// Control period Δt.
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.action_repeat as f64
    }

    pub fn action_dim(&self) -> usize {
        self.control.action_dim()
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout { action_dim: self.action_dim(), lidar_len: self.lidar.len() }
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            rows: self.grid_rows,
            cols: self.grid_cols,
            cell_length: self.cell_size,
            cell_width: self.cell_size,
            origin: [0.0, 0.0],
        }
    }
}

/// Offsets of each block in the flat observation
/// `[a_{t-1}, d, omega, q, roll, pitch, s_TG, g_d, g_h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub action_dim: usize,
    pub lidar_len: usize,
}

impl ObsLayout {
    pub fn dim(&self) -> usize {
        self.action_dim + self.lidar_len + PROPRIO_DIM + TG_STATE_DIM + 2
    }

    pub fn prev_action(&self) -> std::ops::Range<usize> {
        0..self.action_dim
    }

    pub fn lidar(&self) -> std::ops::Range<usize> {
        let s = self.action_dim;
        s..s + self.lidar_len
    }

    pub fn proprio(&self) -> std::ops::Range<usize> {
        let s = self.action_dim + self.lidar_len;
        s..s + PROPRIO_DIM
    }

    pub fn tg_state(&self) -> std::ops::Range<usize> {
        let s = self.proprio().end;
        s..s + TG_STATE_DIM
    }

    pub fn goal(&self) -> std::ops::Range<usize> {
        let s = self.tg_state().end;
        s..s + 2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub layout: ObsLayout,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn g_d(&self) -> f64 {
        self.data[self.layout.goal().start]
    }

    pub fn g_h(&self) -> f64 {
        self.data[self.layout.goal().start + 1]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    pub fallen: bool,
    pub timeout: bool,
    pub fault: bool,
    pub g_d: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub position: [f64; 3],
    /// (w, x, y, z).
    pub orientation: [f64; 4],
    pub q: [f64; NUM_JOINTS],
    pub action: [f64; NUM_JOINTS],
    pub reward: f64,
    pub g_d: f64,
}

pub fn write_trace_jsonl(records: &[TraceRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// 1 - g_dT / g_d0.
pub fn task_completion_rate(g_d0: f64, g_dt: f64) -> Result<f64, EnvError> {
    if !(g_d0 > 0.0) {
        return Err(EnvError::NonPositiveDistance(g_d0));
    }
    Ok(1.0 - g_dt / g_d0)
}

/// Approach speed toward the goal over one control period.
pub fn progress_reward(g_prev: f64, g_next: f64, dt: f64) -> f64 {
    (g_prev - g_next) / dt
}

pub struct Env {
    config: Arc<EnvConfig>,
    task: TaskSpec,
    field: Heightfield,
    state: RobotState,
    tg: TGState,
    tg_params: TGParams,
    goal: Vector3<f64>,
    prev_action: Vec<f64>,
    g_d0: f64,
    g_d: f64,
    steps: usize,
    reward_sum: f64,
    done: bool,
    rng: ChaCha8Rng,
    trace: Option<Vec<TraceRecord>>,
}

impl Env {
    /// Samples a task from `dist` and starts an episode on it.
    pub fn reset(dist: &TaskDistribution, config: Arc<EnvConfig>, seed: u64) -> Result<(Env, Observation), EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = dist.sample_task(rng.next_u64())?;
        Self::start(task, config, rng)
    }

    /// Starts an episode on a fixed task.
    pub fn reset_with_task(task: &TaskSpec, config: Arc<EnvConfig>, seed: u64) -> Result<(Env, Observation), EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.next_u64();
        Self::start(task.clone(), config, rng)
    }

    fn start(task: TaskSpec, config: Arc<EnvConfig>, mut rng: ChaCha8Rng) -> Result<(Env, Observation), EnvError> {
        config.validate()?;
        let field = generate_with(&task, &config.geometry())?;
        let model = &config.robot;

        let x = config.start_offset;
        let mut y = 0.5 * field.width();
        let mut tries = 0;
        while task.terrain_type.is_sparse() && !footprint_clear(&field, x, y) {
            tries += 1;
            if tries >= START_TRIES {
                return Err(EnvError::StartPlacement(START_TRIES));
            }
            y = rng.random_range(1.0..(field.width() - 1.0).max(1.0 + 1e-9));
        }

        let ground = model
            .hip_offsets
            .iter()
            .map(|h| field.height_at(x + h[0], y + h[1]))
            .fold(f64::NEG_INFINITY, f64::max);
        let pose = nominal_pose(model);
        let standing = RobotState::standing(model, [x, y], ground);
        let state = settle(model, &standing, &pose, &field, config.settle_steps)?;

        let [lo, hi] = config.goal_distance;
        let distance = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let probe = field.height_at(x + distance, y);
        let dz = state.position.z - probe;
        let horizontal = (distance * distance - dz * dz).max(0.0).sqrt();
        let gx = state.position.x + horizontal;
        let gy = state.position.y;
        let goal = Vector3::new(gx, gy, field.height_at(gx, gy));

        let (g_d0, _) = goal_sensor(&state, &goal);
        let mut env = Env {
            prev_action: vec![0.0; config.action_dim()],
            config,
            task,
            field,
            state,
            tg: TGState::default(),
            tg_params: TGParams::default(),
            goal,
            g_d0,
            g_d: g_d0,
            steps: 0,
            reward_sum: 0.0,
            done: false,
            rng,
            trace: None,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn field(&self) -> &Heightfield {
        &self.field
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    /// Direct access for scripted test doubles.
    pub fn state_mut(&mut self) -> &mut RobotState {
        &mut self.state
    }

    pub fn goal(&self) -> Vector3<f64> {
        self.goal
    }

    pub fn initial_distance(&self) -> f64 {
        self.g_d0
    }

    pub fn distance(&self) -> f64 {
        self.g_d
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_sum
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn tcr(&self) -> f64 {
        1.0 - self.g_d / self.g_d0
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    /// Joint targets for a normalized action in [-1, 1]^action_dim.
    fn joint_targets(&mut self, u: &[f64]) -> [f64; NUM_JOINTS] {
        let model = &self.config.robot;
        let dt = self.config.control_dt();
        match self.config.control {
            ControlMode::Pmtg => {
                self.tg_params = TGParams::from_normalized([u[0], u[1], u[2]]);
                self.tg = pmtg::advance(&self.tg, &self.tg_params, dt);
                let feet = pmtg::foot_targets(&self.tg, &self.tg_params, model);
                let residual: [f64; NUM_JOINTS] = std::array::from_fn(|k| u[3 + k] * RESIDUAL_LIMIT);
                pmtg::compose_action(&feet, &residual, model)
            }
            ControlMode::Reactive => {
                let base = nominal_pose(model);
                let mut a: [f64; NUM_JOINTS] = std::array::from_fn(|k| base[k] + REACTIVE_SCALE * u[k]);
                model.clamp_to_limits(&mut a);
                a
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let expected = self.config.action_dim();
        if action.len() != expected {
            return Err(EnvError::ActionDimension { expected, got: action.len() });
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let u: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let target = self.joint_targets(&u);

        let mut fault = false;
        for _ in 0..self.config.action_repeat {
            match step_lowlevel(&self.config.robot, &self.state, &target, &self.field, self.config.physics_dt) {
                Ok(next) => self.state = next,
                Err(_) => {
                    fault = true;
                    break;
                }
            }
        }

        let g_prev = self.g_d;
        self.g_d = goal_sensor(&self.state, &self.goal).0;
        let reward = progress_reward(g_prev, self.g_d, self.config.control_dt());
        self.reward_sum += reward;
        self.steps += 1;
        self.prev_action = u;

        let success = self.g_d <= self.config.success_radius;
        let fallen = !success && is_fallen(&self.state, &self.field);
        let timeout = self.steps >= self.config.max_steps;
        self.done = success || fallen || timeout || fault;

        if let Some(trace) = self.trace.as_mut() {
            let quat = self.state.orientation.quaternion();
            trace.push(TraceRecord {
                time: self.state.time,
                position: self.state.position.into(),
                orientation: [quat.w, quat.i, quat.j, quat.k],
                q: self.state.q,
                action: target,
                reward,
                g_d: self.g_d,
            });
        }

        let observation = self.observe();
        Ok(StepResult {
            observation,
            reward,
            done: self.done,
            info: StepInfo { success, fallen, timeout, fault, g_d: self.g_d, steps: self.steps },
        })
    }

    fn observe(&mut self) -> Observation {
        let cfg = &self.config;
        let layout = cfg.layout();
        let mut data = Vec::with_capacity(layout.dim());
        data.extend_from_slice(&self.prev_action);
        let lidar_seed = self.rng.next_u64();
        if cfg.blind {
            data.resize(data.len() + layout.lidar_len, 0.0);
        } else {
            let pose = cfg.lidar.sensor_pose(&self.state);
            data.extend(raycast_scan(&cfg.lidar, &pose, &self.field, lidar_seed).normalized());
        }
        let proprio = proprioception(&self.state, cfg.proprio_noise, self.rng.next_u64());
        data.extend_from_slice(&proprio.omega);
        data.extend_from_slice(&proprio.q);
        data.extend_from_slice(&[proprio.roll, proprio.pitch]);
        match cfg.control {
            ControlMode::Pmtg => data.extend_from_slice(&self.tg.export(&self.tg_params)),
            ControlMode::Reactive => data.extend_from_slice(&[0.0; TG_STATE_DIM]),
        }
        let (g_d, g_h) = goal_sensor(&self.state, &self.goal);
        data.extend_from_slice(&[g_d, g_h]);
        debug_assert_eq!(data.len(), layout.dim());
        Observation { layout, data }
    }
}

/// The area under the standing robot is exactly at height zero.
fn footprint_clear(field: &Heightfield, x: f64, y: f64) -> bool {
    let (hx, hy) = (0.45, 0.3);
    let step = 0.5 * field.cell_length().min(field.cell_width());
    let nx = (2.0 * hx / step).ceil() as usize;
    let ny = (2.0 * hy / step).ceil() as usize;
    (0..=nx).all(|a| {
        (0..=ny).all(|b| {
            let px = x - hx + 2.0 * hx * a as f64 / nx as f64;
            let py = y - hy + 2.0 * hy * b as f64 / ny as f64;
            field.cell_at(px, py).is_some_and(|(i, j)| field.get(i, j) == 0.0)
        })
    })
}
