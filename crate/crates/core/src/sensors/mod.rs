//! Simulated LiDAR, IMU/encoder readings and the goal sensor.

mod lidar;

pub use lidar::{cast_ray, raycast_scan, LidarConfig, LidarScan};

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::physics::{RobotState, NUM_JOINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proprioception {
    /// Torso-frame angular velocity.
    pub omega: [f64; 3],
    pub q: [f64; NUM_JOINTS],
    pub roll: f64,
    pub pitch: f64,
}

/// IMU and joint-encoder readings with optional per-channel Gaussian noise.
pub fn proprioception(state: &RobotState, noise_sigma: f64, seed: u64) -> Proprioception {
    let (roll, pitch, _) = state.orientation.euler_angles();
    let mut out = Proprioception {
        omega: [state.angular_velocity.x, state.angular_velocity.y, state.angular_velocity.z],
        q: state.q,
        roll,
        pitch,
    };
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for v in out.omega.iter_mut().chain(out.q.iter_mut()).chain([&mut out.roll, &mut out.pitch]) {
            *v += normal.sample(&mut rng);
        }
    }
    out
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Distance to the goal and its bearing relative to the torso heading,
/// positive to the left.
pub fn goal_sensor(state: &RobotState, goal: &Vector3<f64>) -> (f64, f64) {
    let delta = goal - state.position;
    let g_d = delta.norm();
    if g_d < 1e-9 {
        return (g_d, 0.0);
    }
    let (_, _, yaw) = state.orientation.euler_angles();
    let bearing = if delta.x == 0.0 && delta.y == 0.0 { yaw } else { delta.y.atan2(delta.x) };
    (g_d, wrap_angle(bearing - yaw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn at(yaw: f64) -> RobotState {
        let mut s = RobotState::at_rest(Vector3::new(1.0, 2.0, 0.4), [0.1; NUM_JOINTS]);
        s.orientation = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        s
    }

    #[test]
    fn level_torso_has_zero_roll_pitch() {
        let p = proprioception(&at(0.0), 0.0, 1);
        assert_eq!((p.roll, p.pitch), (0.0, 0.0));
    }

    #[test]
    fn pure_roll_matches_closed_form() {
        let mut s = at(0.0);
        let half = 0.15f64;
        s.orientation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(half.cos(), half.sin(), 0.0, 0.0));
        let q = s.orientation.quaternion();
        let roll = (2.0 * (q.w * q.i + q.j * q.k)).atan2(1.0 - 2.0 * (q.i * q.i + q.j * q.j));
        let p = proprioception(&s, 0.0, 0);
        assert!((p.roll - roll).abs() < 1e-12);
        assert!((p.roll - 0.3).abs() < 1e-12);
        assert!(p.pitch.abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut s = at(0.3);
        s.angular_velocity = Vector3::new(0.1, -0.2, 0.3);
        let p = proprioception(&s, 0.0, 99);
        assert_eq!(p.omega, [0.1, -0.2, 0.3]);
        assert_eq!(p.q, s.q);
        let noisy = proprioception(&s, 0.1, 99);
        assert_ne!(noisy.q, s.q);
        assert_eq!(noisy, proprioception(&s, 0.1, 99));
    }

    #[test]
    fn goal_ahead_left_and_diagonal() {
        let s = at(0.0);
        let p = s.position;
        let (d, h) = goal_sensor(&s, &(p + Vector3::new(3.0, 0.0, 0.0)));
        assert_eq!((d, h), (3.0, 0.0));
        let (_, h) = goal_sensor(&s, &(p + Vector3::new(0.0, 2.0, 0.0)));
        assert!((h - PI / 2.0).abs() < 1e-15);
        let (d, h) = goal_sensor(&s, &(p + Vector3::new(1.0, 1.0, 0.0)));
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!((h - 1f64.atan2(1.0)).abs() < 1e-15);
        assert_eq!(goal_sensor(&s, &p), (0.0, 0.0));
    }

    #[test]
    fn heading_is_relative_to_yaw() {
        let s = at(PI / 2.0);
        let (_, h) = goal_sensor(&s, &(s.position + Vector3::new(0.0, 5.0, 0.0)));
        assert!(h.abs() < 1e-12);
        let (_, h) = goal_sensor(&s, &(s.position + Vector3::new(0.0, -5.0, 0.0)));
        assert!((h.abs() - PI).abs() < 1e-12 && h > -PI);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }
}
