use std::f64::consts::{PI, TAU};
use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use super::NetError;
use crate::env::{ObsLayout, PMTG_ACTION_DIM, PROPRIO_DIM};
use crate::pmtg::{TGParams, MAX_FREQUENCY, MAX_STRIDE, MAX_SWING_HEIGHT, TG_STATE_DIM};

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Hidden and output widths of each sub-network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyArch {
    pub lidar_encoder: Vec<usize>,
    pub proprio_encoder: Vec<usize>,
    pub trunk: Vec<usize>,
    pub value: Vec<usize>,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            lidar_encoder: vec![32, 16, 4],
            proprio_encoder: vec![32, 16, 4],
            trunk: vec![256, 128],
            value: vec![512, 256],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyInit {
    pub log_std: f64,
    /// Scale of the final mean layer relative to He init.
    pub mean_gain: f64,
    /// Gait the untrained policy's mean starts at (PMTG mode only).
    pub gait_prior: Option<TGParams>,
}

impl Default for PolicyInit {
    fn default() -> Self {
        Self { log_std: -2.0, mean_gain: 0.01, gait_prior: Some(TGParams::walking_prior()) }
    }
}

/// Twin encoders feeding a Gaussian policy trunk and a value head.
/// Parameters are a flat vector ordered: lidar encoder (absent when blind),
/// proprio encoder, trunk, value head, log-std.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    pub layout: ObsLayout,
    pub blind: bool,
    pub lidar_encoder: Option<Mlp>,
    pub proprio_encoder: Mlp,
    pub trunk: Mlp,
    pub value: Mlp,
    scale: Vec<f64>,
}

pub struct PolicyOutput {
    /// tanh-squashed mean, batch x action_dim.
    pub mean: Array2<f64>,
    pub log_std: Array1<f64>,
    pub value: Array1<f64>,
    cache: ForwardCache,
}

struct ForwardCache {
    lidar: Option<MlpCache>,
    proprio: MlpCache,
    trunk: MlpCache,
    value: MlpCache,
}

impl PolicyNet {
    pub fn new(layout: ObsLayout, arch: &PolicyArch, blind: bool) -> Result<Self, NetError> {
        let check = |name: &str, widths: &[usize], min: usize| {
            if widths.len() < min || widths.contains(&0) {
                Err(NetError::InvalidArch(format!("{name} widths {widths:?}")))
            } else {
                Ok(())
            }
        };
        check("lidar_encoder", &arch.lidar_encoder, 1)?;
        check("proprio_encoder", &arch.proprio_encoder, 1)?;
        check("trunk", &arch.trunk, 0)?;
        check("value", &arch.value, 0)?;
        let chain = |input: usize, widths: &[usize], out: Option<usize>| {
            let mut sizes = vec![input];
            sizes.extend_from_slice(widths);
            sizes.extend(out);
            Mlp::new(sizes)
        };
        let lidar_encoder = (!blind).then(|| chain(layout.lidar_len, &arch.lidar_encoder, None));
        let proprio_in = layout.action_dim + PROPRIO_DIM + TG_STATE_DIM;
        let proprio_encoder = chain(proprio_in, &arch.proprio_encoder, None);
        let feature_dim =
            lidar_encoder.as_ref().map_or(0, Mlp::output_dim) + proprio_encoder.output_dim() + 2;
        let trunk = chain(feature_dim, &arch.trunk, Some(layout.action_dim));
        let value = chain(feature_dim, &arch.value, Some(1));
        Ok(Self { scale: input_scale(&layout), layout, blind, lidar_encoder, proprio_encoder, trunk, value })
    }

    pub fn action_dim(&self) -> usize {
        self.layout.action_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Sub-network layer sizes in parameter order.
    pub fn layout_map(&self) -> Vec<Vec<usize>> {
        self.mlps().map(|m| m.sizes.clone()).collect()
    }

    fn mlps(&self) -> impl Iterator<Item = &Mlp> {
        self.lidar_encoder.iter().chain([&self.proprio_encoder, &self.trunk, &self.value])
    }

    fn ranges(&self) -> (Option<Range<usize>>, Range<usize>, Range<usize>, Range<usize>, Range<usize>) {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let lidar = self.lidar_encoder.as_ref().map(|m| take(m.num_params()));
        let proprio = take(self.proprio_encoder.num_params());
        let trunk = take(self.trunk.num_params());
        let value = take(self.value.num_params());
        let log_std = take(self.action_dim());
        (lidar, proprio, trunk, value, log_std)
    }

    pub fn num_params(&self) -> usize {
        self.ranges().4.end
    }

    pub fn log_std_range(&self) -> Range<usize> {
        self.ranges().4
    }

    pub fn value_range(&self) -> Range<usize> {
        self.ranges().3
    }

    /// Parameter range of the value head's output layer weights.
    pub fn value_output_weights(&self) -> Range<usize> {
        let r = self.value_range();
        let last = self.value.num_layers() - 1;
        let before: usize = self.value.sizes[..=last].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let n = self.value.sizes[last];
        r.start + before..r.start + before + n
    }

    pub fn init_params(&self, init: &PolicyInit, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params()];
        let (lidar, proprio, trunk, value, log_std) = self.ranges();
        if let (Some(m), Some(r)) = (&self.lidar_encoder, lidar) {
            m.init(&mut p[r], 1.0, rng);
        }
        self.proprio_encoder.init(&mut p[proprio], 1.0, rng);
        self.trunk.init(&mut p[trunk.clone()], init.mean_gain, rng);
        if let (Some(prior), true) = (init.gait_prior, self.layout.action_dim == PMTG_ACTION_DIM) {
            let bias_start = trunk.end - self.trunk.output_dim();
            for (b, u) in p[bias_start..bias_start + 3].iter_mut().zip(prior.to_normalized()) {
                *b = u.clamp(-0.999, 0.999).atanh();
            }
        }
        self.value.init(&mut p[value], 1.0, rng);
        p[log_std].fill(init.log_std);
        p
    }

    fn check_input(&self, params: &[f64], obs: &ArrayView2<f64>) -> Result<(), NetError> {
        if params.len() != self.num_params() {
            return Err(NetError::ParamCount { expected: self.num_params(), got: params.len() });
        }
        if obs.ncols() != self.layout.dim() {
            return Err(NetError::ObservationDim { expected: self.layout.dim(), got: obs.ncols() });
        }
        Ok(())
    }

    /// Encoder outputs concatenated with the goal entries.
    fn features(&self, params: &[f64], obs: ArrayView2<f64>) -> (Option<MlpCache>, MlpCache, Array2<f64>) {
        let x = &obs * &ArrayView2::from_shape((1, self.scale.len()), &self.scale).unwrap();
        let (lidar_r, proprio_r, ..) = self.ranges();
        let l = &self.layout;

        let lidar = match (&self.lidar_encoder, lidar_r) {
            (Some(m), Some(r)) => Some(m.forward(&params[r], x.slice(s![.., l.lidar()]))),
            _ => None,
        };
        let mut proprio_in = Array2::zeros((x.nrows(), self.proprio_encoder.input_dim()));
        proprio_in.slice_mut(s![.., ..l.action_dim]).assign(&x.slice(s![.., l.prev_action()]));
        proprio_in.slice_mut(s![.., l.action_dim..]).assign(&x.slice(s![.., l.proprio().start..l.tg_state().end]));
        let proprio = self.proprio_encoder.forward(&params[proprio_r], proprio_in.view());

        let mut parts: Vec<ArrayView2<f64>> = Vec::new();
        if let Some(c) = &lidar {
            parts.push(c.output().view());
        }
        parts.push(proprio.output().view());
        parts.push(x.slice(s![.., l.goal()]));
        let features = ndarray::concatenate(Axis(1), &parts).unwrap();
        (lidar, proprio, features)
    }

    fn clamped_log_std(&self, params: &[f64]) -> Array1<f64> {
        Array1::from_iter(params[self.log_std_range()].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)))
    }

    pub fn forward(&self, params: &[f64], obs: ArrayView2<f64>) -> Result<PolicyOutput, NetError> {
        self.check_input(params, &obs)?;
        let (_, _, trunk_r, value_r, _) = self.ranges();
        let (lidar, proprio, features) = self.features(params, obs);
        let trunk = self.trunk.forward(&params[trunk_r], features.view());
        let value = self.value.forward(&params[value_r], features.view());
        let mean = trunk.output().mapv(f64::tanh);
        let value_out = value.output().column(0).to_owned();
        Ok(PolicyOutput {
            mean,
            log_std: self.clamped_log_std(params),
            value: value_out,
            cache: ForwardCache { lidar, proprio, trunk, value },
        })
    }

    /// Mean and log-std for a single observation, skipping the value head.
    pub fn act(&self, params: &[f64], obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NetError> {
        let obs = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        self.check_input(params, &obs)?;
        let (_, _, features) = self.features(params, obs);
        let trunk = self.trunk.forward(&params[self.ranges().2], features.view());
        let mean = trunk.output().row(0).mapv(f64::tanh).to_vec();
        Ok((mean, self.clamped_log_std(params).to_vec()))
    }

    /// Gradient of a scalar loss given its partials with respect to the
    /// squashed mean, the (clamped) log-std and the value.
    pub fn backward(
        &self,
        params: &[f64],
        out: &PolicyOutput,
        d_mean: ArrayView2<f64>,
        d_log_std: &Array1<f64>,
        d_value: &Array1<f64>,
    ) -> Vec<f64> {
        let (lidar_r, proprio_r, trunk_r, value_r, log_std_r) = self.ranges();
        let mut grad = vec![0.0; self.num_params()];
        let c = &out.cache;

        let d_pre = &d_mean * &out.mean.mapv(|m| 1.0 - m * m);
        let mut d_features = self.trunk.backward(&params[trunk_r.clone()], &c.trunk, d_pre.view(), &mut grad[trunk_r]);
        let d_v = d_value.view().insert_axis(Axis(1));
        d_features += &self.value.backward(&params[value_r.clone()], &c.value, d_v, &mut grad[value_r]);

        let mut col = 0;
        if let (Some(m), Some(cache), Some(r)) = (&self.lidar_encoder, &c.lidar, lidar_r) {
            let n = m.output_dim();
            m.backward(&params[r.clone()], cache, d_features.slice(s![.., col..col + n]), &mut grad[r]);
            col += n;
        }
        let n = self.proprio_encoder.output_dim();
        self.proprio_encoder.backward(
            &params[proprio_r.clone()],
            &c.proprio,
            d_features.slice(s![.., col..col + n]),
            &mut grad[proprio_r],
        );

        for ((g, d), p) in grad[log_std_r.clone()].iter_mut().zip(d_log_std).zip(&params[log_std_r]) {
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(p) {
                *g = *d;
            }
        }
        grad
    }
}

/// Fixed per-entry observation scaling.
fn input_scale(layout: &ObsLayout) -> Vec<f64> {
    let mut scale = vec![1.0; layout.dim()];
    let p = layout.proprio().start;
    scale[p..p + 3].fill(0.25);
    let t = layout.tg_state().start;
    scale[t + 2] = 1.0 / MAX_FREQUENCY;
    scale[t + 3] = 1.0 / MAX_SWING_HEIGHT;
    scale[t + 4] = 1.0 / MAX_STRIDE;
    let g = layout.goal().start;
    scale[g] = 0.1;
    scale[g + 1] = 1.0 / PI;
    scale
}

/// Diagonal Gaussian log-density of `action`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * TAU.ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (TAU * std::f64::consts::E).ln()).sum()
}

pub fn log_prob_and_entropy(mean: &[f64], log_std: &[f64], action: &[f64]) -> (f64, f64) {
    (gaussian_log_prob(mean, log_std, action), gaussian_entropy(log_std))
}
