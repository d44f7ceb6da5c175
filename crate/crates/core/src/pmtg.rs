//! Trot trajectory generator modulated by the policy, plus a joint-space
//! residual.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::physics::{inverse_kinematics, Leg, RobotModel, NUM_JOINTS, NUM_LEGS};

pub const MAX_FREQUENCY: f64 = 3.0;
pub const MAX_SWING_HEIGHT: f64 = 0.25;
pub const MAX_STRIDE: f64 = 0.3;
/// Per-joint bound on the learned residual, radians.
pub const RESIDUAL_LIMIT: f64 = 0.4;
/// Phase offsets for (LF, RF, LH, RH).
pub const TROT_OFFSETS: [f64; NUM_LEGS] = [0.0, PI, PI, 0.0];
/// Length of the exported TG state: sin, cos, frequency, swing height, stride.
pub const TG_STATE_DIM: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TGParams {
    pub frequency: f64,
    pub swing_height: f64,
    pub stride: f64,
}

impl TGParams {
    pub fn new(frequency: f64, swing_height: f64, stride: f64) -> Self {
        Self { frequency, swing_height, stride }
    }

    pub fn clamped(self) -> Self {
        Self {
            frequency: self.frequency.clamp(0.0, MAX_FREQUENCY),
            swing_height: self.swing_height.clamp(0.0, MAX_SWING_HEIGHT),
            stride: self.stride.clamp(-MAX_STRIDE, MAX_STRIDE),
        }
    }

    /// Maps a policy output in [-1, 1]^3 onto the parameter ranges.
    pub fn from_normalized(u: [f64; 3]) -> Self {
        let u = u.map(|v| v.clamp(-1.0, 1.0));
        Self {
            frequency: 0.5 * (u[0] + 1.0) * MAX_FREQUENCY,
            swing_height: 0.5 * (u[1] + 1.0) * MAX_SWING_HEIGHT,
            stride: u[2] * MAX_STRIDE,
        }
    }

    /// Inverse of [`TGParams::from_normalized`] on the clamped parameters.
    pub fn to_normalized(&self) -> [f64; 3] {
        let p = self.clamped();
        [
            2.0 * p.frequency / MAX_FREQUENCY - 1.0,
            2.0 * p.swing_height / MAX_SWING_HEIGHT - 1.0,
            p.stride / MAX_STRIDE,
        ]
    }

    /// A moderate trot that walks forward open-loop on flat ground.
    pub fn walking_prior() -> Self {
        Self::new(2.7, 0.05, 0.22)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGState {
    /// Wrapped to [0, 2pi).
    pub phase: f64,
    pub offsets: [f64; NUM_LEGS],
}

impl Default for TGState {
    fn default() -> Self {
        Self { phase: 0.0, offsets: TROT_OFFSETS }
    }
}

impl TGState {
    /// (sin phase, cos phase, f, swing height, stride).
    pub fn export(&self, params: &TGParams) -> [f64; TG_STATE_DIM] {
        let (s, c) = self.phase.sin_cos();
        [s, c, params.frequency, params.swing_height, params.stride]
    }
}

pub fn advance(state: &TGState, params: &TGParams, dt: f64) -> TGState {
    let f = params.clamped().frequency;
    let mut phase = (state.phase + TAU * f * dt).rem_euclid(TAU);
    if phase >= TAU {
        phase = 0.0;
    }
    TGState { phase, ..*state }
}

/// Hip-frame foot position of one leg at leg phase `p`. The first half of
/// the cycle is swing (cycloid lift, moving forward); the second half is
/// stance (linear, moving backward at nominal depth).
pub fn foot_target(p: f64, params: &TGParams, depth: f64) -> Vector3<f64> {
    let params = params.clamped();
    let (stride, lift) = (params.stride, params.swing_height);
    let p = p.rem_euclid(TAU);
    if p < PI {
        let s = p / PI;
        let progress = s - (TAU * s).sin() / TAU;
        let x = -0.5 * stride + stride * progress;
        let z = -depth + lift * 0.5 * (1.0 - (TAU * s).cos());
        Vector3::new(x, 0.0, z)
    } else {
        let s = (p - PI) / PI;
        Vector3::new(0.5 * stride - stride * s, 0.0, -depth)
    }
}

pub fn foot_targets(state: &TGState, params: &TGParams, model: &RobotModel) -> [Vector3<f64>; NUM_LEGS] {
    std::array::from_fn(|k| foot_target(state.phase + state.offsets[k], params, model.nominal_height))
}

/// Joint angles tracking the TG foot targets.
pub fn tg_joint_targets(feet: &[Vector3<f64>; NUM_LEGS], model: &RobotModel) -> [f64; NUM_JOINTS] {
    let mut q = [0.0; NUM_JOINTS];
    for leg in Leg::ALL {
        let k = 3 * leg.index();
        q[k..k + 3].copy_from_slice(&inverse_kinematics(model, leg, feet[leg.index()]).angles);
    }
    q
}

/// `mu_tg + residual`, clamped to the joint limits.
pub fn combine(mu_tg: &[f64; NUM_JOINTS], residual: &[f64; NUM_JOINTS], model: &RobotModel) -> [f64; NUM_JOINTS] {
    let mut a: [f64; NUM_JOINTS] = std::array::from_fn(|k| mu_tg[k] + residual[k]);
    model.clamp_to_limits(&mut a);
    a
}

pub fn compose_action(
    feet: &[Vector3<f64>; NUM_LEGS],
    residual: &[f64; NUM_JOINTS],
    model: &RobotModel,
) -> [f64; NUM_JOINTS] {
    combine(&tg_joint_targets(feet, model), residual, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circular_gap(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    #[test]
    fn one_hertz_returns_after_one_second() {
        let params = TGParams::new(1.0, 0.1, 0.1);
        let mut s = TGState::default();
        for _ in 0..100 {
            s = advance(&s, &params, 0.01);
        }
        assert!(circular_gap(s.phase, 0.0) < 1e-9);
        assert!((0.0..TAU).contains(&s.phase));
    }

    #[test]
    fn zero_frequency_freezes_phase() {
        let s = TGState { phase: 1.234, ..TGState::default() };
        assert_eq!(advance(&s, &TGParams::new(0.0, 0.1, 0.2), 0.01).phase, 1.234);
    }

    #[test]
    fn single_advance_formula() {
        let s = advance(&TGState::default(), &TGParams::new(2.0, 0.0, 0.0), 0.01);
        assert!((s.phase - 0.04 * PI).abs() < 1e-15);
    }

    #[test]
    fn degenerate_gait_holds_feet() {
        let m = RobotModel::default();
        let params = TGParams::new(2.0, 0.0, 0.0);
        for k in 0..100 {
            let s = TGState { phase: TAU * k as f64 / 100.0, ..TGState::default() };
            for foot in foot_targets(&s, &params, &m) {
                assert_eq!(foot, Vector3::new(0.0, 0.0, -m.nominal_height));
            }
        }
    }

    #[test]
    fn stride_sweep_spans_half_stride_each_way() {
        let params = TGParams::new(1.0, 0.08, 0.2);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..10_000 {
            let x = foot_target(TAU * k as f64 / 10_000.0, &params, 0.42).x;
            lo = lo.min(x);
            hi = hi.max(x);
        }
        assert!((lo + 0.1).abs() < 1e-12, "{lo}");
        assert!((hi - 0.1).abs() < 1e-12, "{hi}");
    }

    #[test]
    fn trot_pairs() {
        let m = RobotModel::default();
        let params = TGParams::new(1.5, 0.1, 0.2);
        for k in 0..64 {
            let s = TGState { phase: TAU * k as f64 / 64.0, ..TGState::default() };
            let f = foot_targets(&s, &params, &m);
            assert_eq!(f[0], f[3]);
            assert_eq!(f[1], f[2]);
            let shifted = TGState { phase: s.phase + PI, ..s };
            assert!((foot_targets(&shifted, &params, &m)[0] - f[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn residual_adds_then_clamps() {
        let m = RobotModel::default();
        let s = TGState { phase: 0.7, ..TGState::default() };
        let feet = foot_targets(&s, &TGParams::new(1.0, 0.1, 0.2), &m);
        let mu_tg = tg_joint_targets(&feet, &m);
        assert_eq!(compose_action(&feet, &[0.0; NUM_JOINTS], &m), mu_tg);

        let v: [f64; NUM_JOINTS] = std::array::from_fn(|k| 0.3 - 0.05 * k as f64);
        let mut want = v;
        m.clamp_to_limits(&mut want);
        assert_eq!(combine(&[0.0; NUM_JOINTS], &v, &m), want);

        let mut push = [0.0; NUM_JOINTS];
        push[2] = 5.0;
        assert_eq!(compose_action(&feet, &push, &m)[2], m.joint_limits[2][1]);
    }

    #[test]
    fn normalized_mapping_covers_ranges() {
        assert_eq!(TGParams::from_normalized([-1.0, -1.0, -1.0]), TGParams::new(0.0, 0.0, -MAX_STRIDE));
        assert_eq!(TGParams::from_normalized([1.0, 1.0, 1.0]), TGParams::new(MAX_FREQUENCY, MAX_SWING_HEIGHT, MAX_STRIDE));
        assert_eq!(TGParams::from_normalized([7.0, 0.0, 0.0]).frequency, MAX_FREQUENCY);
        let p = TGParams::new(2.1, 0.07, -0.12);
        let back = TGParams::from_normalized(p.to_normalized());
        assert!((back.frequency - 2.1).abs() < 1e-12);
        assert!((back.swing_height - 0.07).abs() < 1e-12);
        assert!((back.stride + 0.12).abs() < 1e-12);
    }
}
