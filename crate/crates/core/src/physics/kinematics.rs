//! Leg kinematics: abduction about x, then hip and knee pitch about y.
//!
//! Angles are zero with the leg hanging straight down. Positive hip pitch
//! swings the thigh backward; the knee bends with negative angles so the
//! knee points backward. Positive abduction moves the foot outward on
//! either side, so identical joint angles give mirror-image legs.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::model::{Leg, RobotModel, NUM_JOINTS, NUM_LEGS};

/// Slack allowed outside the joint limits before forward kinematics clamps.
pub const FK_LIMIT_TOLERANCE: f64 = 0.2;

/// Torso position and orientation in the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }
}

/// Foot position relative to the hip, in the torso frame.
pub fn leg_fk(model: &RobotModel, leg: Leg, q: [f64; 3]) -> Vector3<f64> {
    let (l1, l2) = (model.upper_length, model.lower_length);
    let [q0, q1, q2] = q;
    let x = -(l1 * q1.sin() + l2 * (q1 + q2).sin());
    let sagittal_z = -(l1 * q1.cos() + l2 * (q1 + q2).cos());
    Vector3::new(x, -leg.side() * q0.sin() * sagittal_z, q0.cos() * sagittal_z)
}

/// d(foot position)/d(joint angles), torso frame; column k is joint k.
pub fn leg_jacobian(model: &RobotModel, leg: Leg, q: [f64; 3]) -> Matrix3<f64> {
    let (l1, l2) = (model.upper_length, model.lower_length);
    let s = leg.side();
    let [q0, q1, q2] = q;
    let (s0, c0) = q0.sin_cos();
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = (q1 + q2).sin_cos();
    let sagittal_z = -(l1 * c1 + l2 * c12);

    let dx1 = -(l1 * c1 + l2 * c12);
    let dz1 = l1 * s1 + l2 * s12;
    let dx2 = -l2 * c12;
    let dz2 = l2 * s12;

    Matrix3::new(
        0.0,
        dx1,
        dx2,
        -s * c0 * sagittal_z,
        -s * s0 * dz1,
        -s * s0 * dz2,
        -s0 * sagittal_z,
        c0 * dz1,
        c0 * dz2,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution {
    pub angles: [f64; 3],
    /// The target was outside the reachable shell and was moved onto it.
    pub clamped: bool,
}

/// Knee-backward solution placing the foot at `target` (hip-relative, torso
/// frame). Unreachable targets are pulled radially onto the reachable shell.
pub fn inverse_kinematics(model: &RobotModel, leg: Leg, target: Vector3<f64>) -> IkSolution {
    let (l1, l2) = (model.upper_length, model.lower_length);
    let lateral = leg.side() * target.y;
    let depth = lateral.hypot(target.z);
    let abduction = if depth > 0.0 { lateral.atan2(-target.z) } else { 0.0 };

    // Planar problem: reach (a, b) = (-x, depth) from the hip.
    let (mut a, mut b) = (-target.x, depth);
    let mut r = a.hypot(b);
    let outer = l1 + l2;
    let inner = (l1 - l2).abs().max(1e-9);
    let mut clamped = false;
    if r > outer + 1e-12 || r < inner - 1e-12 || r == 0.0 {
        clamped = true;
        let r_new = r.clamp(inner, outer);
        if r > 0.0 {
            a *= r_new / r;
            b *= r_new / r;
        } else {
            b = r_new;
        }
        r = r_new;
    }
    let cos_knee = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = -cos_knee.acos();
    let hip = a.atan2(b) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    IkSolution { angles: [abduction, hip, knee], clamped }
}

/// World positions of all four feet. Joint angles are clamped to the limits
/// widened by [`FK_LIMIT_TOLERANCE`].
pub fn forward_kinematics(model: &RobotModel, q: &[f64; NUM_JOINTS], pose: &Pose) -> [Vector3<f64>; NUM_LEGS] {
    Leg::ALL.map(|leg| {
        let k = 3 * leg.index();
        let mut angles = [q[k], q[k + 1], q[k + 2]];
        for (a, [lo, hi]) in angles.iter_mut().zip(model.leg_limits(leg)) {
            *a = a.clamp(lo - FK_LIMIT_TOLERANCE, hi + FK_LIMIT_TOLERANCE);
        }
        pose.transform_point(&(model.hip_offset(leg) + leg_fk(model, leg, angles)))
    })
}

/// Joint angles placing every foot `nominal_height` straight below its hip.
pub fn nominal_pose(model: &RobotModel) -> [f64; NUM_JOINTS] {
    let mut q = [0.0; NUM_JOINTS];
    for leg in Leg::ALL {
        let sol = inverse_kinematics(model, leg, Vector3::new(0.0, 0.0, -model.nominal_height));
        q[3 * leg.index()..3 * leg.index() + 3].copy_from_slice(&sol.angles);
    }
    q
}
