use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::PhysicsError;

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;

/// Leg order used everywhere: left-front, right-front, left-hind, right-hind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Leg {
    LeftFront,
    RightFront,
    LeftHind,
    RightHind,
}

impl Leg {
    pub const ALL: [Leg; NUM_LEGS] = [Leg::LeftFront, Leg::RightFront, Leg::LeftHind, Leg::RightHind];

    pub fn index(self) -> usize {
        self as usize
    }

    /// +1 for left legs, -1 for right legs.
    pub fn side(self) -> f64 {
        match self {
            Leg::LeftFront | Leg::LeftHind => 1.0,
            Leg::RightFront | Leg::RightHind => -1.0,
        }
    }
}

/// Penalty contact between feet and pillar tops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Normal spring, N/m.
    pub stiffness: f64,
    /// Normal damper, N*s/m.
    pub damping: f64,
    /// Coulomb coefficient capping the tangential force.
    pub friction: f64,
    /// Stick spring between a foot and its touchdown point, N/m.
    pub tangential_stiffness: f64,
    /// Tangential damper, N*s/m. Spring plus damper force is capped by friction.
    pub tangential_damping: f64,
    /// Penetration beyond this depth adds no extra spring force, m.
    pub max_penetration: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 1e4, damping: 300.0, friction: 0.6, tangential_stiffness: 5e3, tangential_damping: 300.0, max_penetration: 0.05 }
    }
}

/// Single rigid torso with three-joint massless legs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub torso_mass: f64,
    /// Torso inertia about the center of mass, torso frame, kg*m^2.
    pub torso_inertia: [[f64; 3]; 3],
    /// Hip joint positions in the torso frame, leg order.
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    pub upper_length: f64,
    pub lower_length: f64,
    /// Per joint `[low, high]`, ordered (abduction, hip pitch, knee) per leg.
    pub joint_limits: [[f64; 2]; NUM_JOINTS],
    pub torque_limit: f64,
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
    /// Reflected motor inertia seen by each joint.
    pub rotor_inertia: f64,
    /// Hip-to-foot depth of the standing pose.
    pub nominal_height: f64,
    pub gravity: f64,
    pub contact: ContactParams,
}

const LEG_LIMITS: [[f64; 2]; 3] = [[-0.8, 0.8], [-1.2, 2.2], [-2.7, 0.0]];

impl Default for RobotModel {
    fn default() -> Self {
        let mass: f64 = 22.0;
        let (lx, ly, lz) = (0.56, 0.26, 0.15);
        let inertia = [
            [mass / 12.0 * (ly * ly + lz * lz), 0.0, 0.0],
            [0.0, mass / 12.0 * (lx * lx + lz * lz), 0.0],
            [0.0, 0.0, mass / 12.0 * (lx * lx + ly * ly)],
        ];
        let mut joint_limits = [[0.0; 2]; NUM_JOINTS];
        for (k, lim) in joint_limits.iter_mut().enumerate() {
            *lim = LEG_LIMITS[k % 3];
        }
        Self {
            torso_mass: mass,
            torso_inertia: inertia,
            hip_offsets: [[0.21, 0.12, 0.0], [0.21, -0.12, 0.0], [-0.21, 0.12, 0.0], [-0.21, -0.12, 0.0]],
            upper_length: 0.25,
            lower_length: 0.25,
            joint_limits,
            torque_limit: 40.0,
            kp: [200.0; NUM_JOINTS],
            kd: [4.0; NUM_JOINTS],
            rotor_inertia: 0.05,
            nominal_height: 0.42,
            gravity: 9.81,
            contact: ContactParams::default(),
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |what: &str| Err(PhysicsError::InvalidModel(what.to_string()));
        if !(self.torso_mass > 0.0) {
            return bad("torso_mass must be > 0");
        }
        if !is_positive_definite(&self.inertia()) {
            return bad("torso_inertia must be symmetric positive-definite");
        }
        if !(self.upper_length > 0.0 && self.lower_length > 0.0) {
            return bad("leg segment lengths must be > 0");
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return bad("joint limits need low < high");
        }
        if !(self.torque_limit > 0.0) {
            return bad("torque_limit must be > 0");
        }
        if self.kp.iter().chain(&self.kd).any(|g| !(*g >= 0.0)) {
            return bad("PD gains must be >= 0");
        }
        if !(self.rotor_inertia > 0.0) {
            return bad("rotor_inertia must be > 0");
        }
        let reach = self.upper_length + self.lower_length;
        let inner = (self.upper_length - self.lower_length).abs();
        if !(self.nominal_height > inner && self.nominal_height < reach) {
            return bad("nominal_height must lie strictly inside the leg's reach");
        }
        if !(self.contact.stiffness >= 0.0
            && self.contact.damping >= 0.0
            && self.contact.friction >= 0.0
            && self.contact.tangential_stiffness >= 0.0
            && self.contact.tangential_damping >= 0.0
            && self.contact.max_penetration > 0.0)
        {
            return bad("contact parameters must be nonnegative");
        }
        Ok(())
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.torso_inertia[r][c])
    }

    pub fn hip_offset(&self, leg: Leg) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg.index()])
    }

    pub fn leg_limits(&self, leg: Leg) -> [[f64; 2]; 3] {
        let k = 3 * leg.index();
        [self.joint_limits[k], self.joint_limits[k + 1], self.joint_limits[k + 2]]
    }

    pub fn clamp_to_limits(&self, q: &mut [f64; NUM_JOINTS]) {
        for (v, [lo, hi]) in q.iter_mut().zip(self.joint_limits) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn is_positive_definite(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).abs().max() < 1e-12 && m.cholesky().is_some()
}
