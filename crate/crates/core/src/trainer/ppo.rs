use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::TrajectoryBatch;
use super::TrainError;
use crate::neuralnet::{clip_grad_norm, gaussian_entropy, Adam, AdamConfig, NetError, PolicyNet};

/// Rows per gradient work item. Fixed so that the reduction order, and with
/// it every floating-point sum, is independent of the thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Parallel rollout workers W.
    pub workers: usize,
    /// Control steps per worker per iteration L.
    pub horizon: usize,
    /// Total env-step budget.
    pub total_steps: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 512,
            learning_rate: 3e-4,
            entropy_coef: 1e-3,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            workers: 8,
            horizon: 1000,
            total_steps: 2_000_000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad("clip must be > 0");
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return bad("epochs and minibatch_size must be >= 1");
        }
        if self.workers == 0 || self.horizon == 0 {
            return bad("workers and horizon must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be > 0");
        }
        if !(self.entropy_coef.is_finite() && self.value_coef.is_finite()) {
            return bad("loss coefficients must be finite");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of log pi_old - log pi_new over the samples seen.
    pub kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Loss terms of one minibatch, each a mean over its rows.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    /// Mean of min(rho A, clip(rho) A).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

impl LossParts {
    /// Quantity minimized: -surrogate + c_v value_loss - c_e entropy.
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        -self.surrogate + cfg.value_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }

    fn add(&mut self, o: &LossParts) {
        self.surrogate += o.surrogate;
        self.value_loss += o.value_loss;
        self.kl += o.kl;
        self.clip_fraction += o.clip_fraction;
    }
}

/// Rows of a batch selected for one gradient step.
pub struct Minibatch<'a> {
    pub observations: &'a Array2<f64>,
    pub actions: &'a Array2<f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Shifts to mean 0 and scales to unit (population) standard deviation.
/// Batches with fewer than two elements or zero spread are only centered.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if adv.len() < 2 || std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// Loss parts and parameter gradient for rows `rows` of a minibatch of
/// `denom` rows. Row-independent terms (entropy) are added only when
/// `with_entropy` is set.
fn chunk_loss_grad(
    net: &PolicyNet,
    params: &[f64],
    mb: &Minibatch,
    rows: std::ops::Range<usize>,
    denom: f64,
    with_entropy: bool,
    cfg: &PpoConfig,
) -> Result<(LossParts, Vec<f64>), NetError> {
    let obs = mb.observations.slice(ndarray::s![rows.clone(), ..]);
    let out = net.forward(params, obs)?;
    let a_dim = net.action_dim();
    let n = rows.len();
    let var: Array1<f64> = out.log_std.mapv(|ls| (2.0 * ls).exp());
    let mut d_mean = Array2::zeros((n, a_dim));
    let mut d_log_std = Array1::zeros(a_dim);
    let mut d_value = Array1::zeros(n);
    let mut parts = LossParts::default();

    for (i, row) in rows.enumerate() {
        let mut log_prob = 0.0;
        for k in 0..a_dim {
            let diff = mb.actions[[row, k]] - out.mean[[i, k]];
            log_prob += -0.5 * diff * diff / var[k] - out.log_std[k] - 0.5 * std::f64::consts::TAU.ln();
        }
        let adv = mb.advantages[row];
        let ratio = (log_prob - mb.old_log_probs[row]).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped_active = ratio * adv <= clipped * adv;
        parts.surrogate += (ratio * adv).min(clipped * adv) / denom;
        parts.kl += (mb.old_log_probs[row] - log_prob) / denom;
        if clipped != ratio {
            parts.clip_fraction += 1.0 / denom;
        }
        if unclipped_active {
            // d(-surrogate)/d(log_prob).
            let g = -ratio * adv / denom;
            for k in 0..a_dim {
                let diff = mb.actions[[row, k]] - out.mean[[i, k]];
                d_mean[[i, k]] += g * diff / var[k];
                d_log_std[k] += g * (diff * diff / var[k] - 1.0);
            }
        }
        let err = out.value[i] - mb.returns[row];
        parts.value_loss += err * err / denom;
        d_value[i] = cfg.value_coef * 2.0 * err / denom;
    }
    if with_entropy {
        parts.entropy = gaussian_entropy(&out.log_std.to_vec());
        d_log_std -= cfg.entropy_coef;
    }
    let grad = net.backward(params, &out, d_mean.view(), &d_log_std, &d_value);
    Ok((parts, grad))
}

/// Loss parts and gradient of the PPO objective over a whole minibatch.
pub fn minibatch_loss_grad(
    net: &PolicyNet,
    params: &[f64],
    mb: &Minibatch,
    cfg: &PpoConfig,
) -> Result<(LossParts, Vec<f64>), NetError> {
    let n = mb.observations.nrows();
    let chunks: Vec<std::ops::Range<usize>> = (0..n).step_by(GRAD_CHUNK).map(|s| s..(s + GRAD_CHUNK).min(n)).collect();
    let work = |(c, rows): (usize, &std::ops::Range<usize>)| chunk_loss_grad(net, params, mb, rows.clone(), n as f64, c == 0, cfg);
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        chunks.par_iter().enumerate().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = chunks.iter().enumerate().map(work).collect();

    let mut parts = LossParts::default();
    let mut grad = vec![0.0; net.num_params()];
    for r in results {
        let (p, g) = r?;
        parts.add(&p);
        parts.entropy += p.entropy;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    Ok((parts, grad))
}

fn gather(src: &[f64], width: usize, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), width));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&src[r * width..(r + 1) * width]));
    }
    out
}

/// `epochs` passes of shuffled minibatches over `batch`. Parameters and
/// optimizer state are only written back if every step stays finite.
pub fn ppo_update(
    net: &PolicyNet,
    params: &mut Vec<f64>,
    adam: &mut Adam,
    batch: &TrajectoryBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats, TrainError> {
    if batch.is_empty() {
        return Ok(PpoStats::default());
    }
    let adam_cfg = cfg.adam();
    let mut p = params.clone();
    let mut opt = adam.clone();
    let advantages = normalize_advantages(&batch.advantages);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = PpoStats::default();
    let mut steps = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for rows in order.chunks(cfg.minibatch_size) {
            let obs = gather(&batch.observations, batch.obs_dim, rows);
            let actions = gather(&batch.actions, batch.action_dim, rows);
            let old: Vec<f64> = rows.iter().map(|&r| batch.log_probs[r]).collect();
            let adv: Vec<f64> = rows.iter().map(|&r| advantages[r]).collect();
            let ret: Vec<f64> = rows.iter().map(|&r| batch.returns[r]).collect();
            let mb = Minibatch { observations: &obs, actions: &actions, old_log_probs: &old, advantages: &adv, returns: &ret };
            let (parts, mut grad) = minibatch_loss_grad(net, &p, &mb, cfg)?;
            let total = parts.total(cfg);
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss);
            }
            stats.grad_norm += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&adam_cfg, &mut p, &grad);
            stats.policy_loss += -parts.surrogate;
            stats.value_loss += parts.value_loss;
            stats.entropy += parts.entropy;
            stats.kl += parts.kl;
            stats.clip_fraction += parts.clip_fraction;
            steps += 1;
        }
    }
    let k = steps as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    *params = p;
    *adam = opt;
    Ok(stats)
}
