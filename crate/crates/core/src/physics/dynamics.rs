use nalgebra::{UnitQuaternion, Vector3};

use super::kinematics::{leg_fk, leg_jacobian, nominal_pose, Pose};
use super::model::{Leg, RobotModel, NUM_JOINTS, NUM_LEGS};
use super::PhysicsError;
use crate::terrain::Heightfield;

pub const DEFAULT_DT: f64 = 1e-3;

/// Fall thresholds.
pub const MAX_TILT: f64 = 0.8;
pub const MIN_TORSO_CLEARANCE: f64 = 0.12;

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World frame.
    pub linear_velocity: Vector3<f64>,
    /// Torso frame.
    pub angular_velocity: Vector3<f64>,
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub contacts: [bool; NUM_LEGS],
    /// Ground point each stuck foot is tied to by the tangential spring.
    pub anchors: [Option<[f64; 2]>; NUM_LEGS],
    pub time: f64,
}

impl RobotState {
    pub fn at_rest(position: Vector3<f64>, q: [f64; NUM_JOINTS]) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            q,
            qd: [0.0; NUM_JOINTS],
            contacts: [false; NUM_LEGS],
            anchors: [None; NUM_LEGS],
            time: 0.0,
        }
    }

    /// Nominal stance with the feet resting on height `ground` below `xy`.
    pub fn standing(model: &RobotModel, xy: [f64; 2], ground: f64) -> Self {
        Self::at_rest(Vector3::new(xy[0], xy[1], ground + model.nominal_height), nominal_pose(model))
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation)
    }

    pub fn is_finite(&self) -> bool {
        let quat = self.orientation.quaternion();
        self.position.iter().all(|v| v.is_finite())
            && quat.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.q.iter().chain(&self.qd).all(|v| v.is_finite())
            && self.time.is_finite()
    }

    /// (roll, pitch, yaw), Z-Y-X convention.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.orientation.euler_angles()
    }

    /// Translational plus rotational kinetic energy plus gravitational
    /// potential of the torso.
    pub fn torso_energy(&self, model: &RobotModel) -> f64 {
        let w = self.angular_velocity;
        0.5 * model.torso_mass * self.linear_velocity.norm_squared()
            + 0.5 * w.dot(&(model.inertia() * w))
            + model.torso_mass * model.gravity * self.position.z
    }
}

/// PD torques, saturated at the torque limit.
pub fn pd_torques(model: &RobotModel, state: &RobotState, target: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|k| {
        let tau = model.kp[k] * (target[k] - state.q[k]) - model.kd[k] * state.qd[k];
        tau.clamp(-model.torque_limit, model.torque_limit)
    })
}

/// Advances the robot one physics tick with semi-implicit Euler: velocities
/// are updated from the current forces, positions from the new velocities.
pub fn step_lowlevel(
    model: &RobotModel,
    state: &RobotState,
    target: &[f64; NUM_JOINTS],
    field: &Heightfield,
    dt: f64,
) -> Result<RobotState, PhysicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PhysicsError::InvalidTimestep(dt));
    }
    if !state.is_finite() || target.iter().any(|t| !t.is_finite()) {
        return Err(PhysicsError::NonFiniteInput);
    }
    let contact = &model.contact;
    let rot = state.orientation.to_rotation_matrix();
    let rot_t = rot.transpose();
    let omega = state.angular_velocity;
    let motor = pd_torques(model, state, target);

    let mut force = Vector3::new(0.0, 0.0, -model.torso_mass * model.gravity);
    let mut torque = Vector3::zeros();
    let mut qdd = [0.0; NUM_JOINTS];
    let mut contacts = [false; NUM_LEGS];
    let mut anchors = [None; NUM_LEGS];

    for leg in Leg::ALL {
        let k = 3 * leg.index();
        let q = [state.q[k], state.q[k + 1], state.q[k + 2]];
        let qd = Vector3::new(state.qd[k], state.qd[k + 1], state.qd[k + 2]);
        let jac = leg_jacobian(model, leg, q);
        let lever = model.hip_offset(leg) + leg_fk(model, leg, q);
        let foot = state.position + rot * lever;
        let foot_vel = state.linear_velocity + rot * (omega.cross(&lever) + jac * qd);

        let mut f = Vector3::zeros();
        let depth = field.height_at(foot.x, foot.y) - foot.z;
        if depth > 0.0 {
            contacts[leg.index()] = true;
            let normal =
                (contact.stiffness * depth.min(contact.max_penetration) - contact.damping * foot_vel.z).max(0.0);
            let [ax, ay] = state.anchors[leg.index()].unwrap_or([foot.x, foot.y]);
            let stretch = Vector3::new(foot.x - ax, foot.y - ay, 0.0);
            let mut tangential = -contact.tangential_stiffness * stretch
                - contact.tangential_damping * Vector3::new(foot_vel.x, foot_vel.y, 0.0);
            let cap = contact.friction * normal;
            let mag = tangential.norm();
            let mut anchor = [ax, ay];
            if mag > cap {
                tangential *= cap / mag;
                // Slipping: drag the anchor so the spring alone matches the cap.
                if contact.tangential_stiffness > 0.0 {
                    let shift = tangential / contact.tangential_stiffness;
                    anchor = [foot.x + shift.x, foot.y + shift.y];
                }
            }
            anchors[leg.index()] = Some(anchor);
            f = tangential + Vector3::new(0.0, 0.0, normal);
            force += f;
            torque += (rot * lever).cross(&f);
        }

        let external = jac.transpose() * (rot_t * f);
        for j in 0..3 {
            qdd[k + j] = (motor[k + j] + external[j]) / model.rotor_inertia;
        }
    }

    let inertia = model.inertia();
    let body_torque = rot_t * torque;
    let omega_dot = inertia
        .try_inverse()
        .ok_or_else(|| PhysicsError::InvalidModel("singular inertia".into()))?
        * (body_torque - omega.cross(&(inertia * omega)));

    let mut next = state.clone();
    next.linear_velocity += force * (dt / model.torso_mass);
    next.position += next.linear_velocity * dt;
    next.angular_velocity += omega_dot * dt;
    let spin = UnitQuaternion::from_scaled_axis(next.angular_velocity * dt);
    next.orientation = UnitQuaternion::new_normalize((state.orientation * spin).into_inner());

    for k in 0..NUM_JOINTS {
        next.qd[k] += qdd[k] * dt;
        next.q[k] += next.qd[k] * dt;
        let [lo, hi] = model.joint_limits[k];
        if next.q[k] < lo {
            next.q[k] = lo;
            next.qd[k] = next.qd[k].max(0.0);
        } else if next.q[k] > hi {
            next.q[k] = hi;
            next.qd[k] = next.qd[k].min(0.0);
        }
    }
    next.contacts = contacts;
    next.anchors = anchors;
    next.time += dt;

    if !next.is_finite() {
        return Err(PhysicsError::Fault { time: state.time });
    }
    Ok(next)
}

/// Roll or pitch past [`MAX_TILT`], or the torso within
/// [`MIN_TORSO_CLEARANCE`] of the terrain directly below it.
pub fn is_fallen(state: &RobotState, field: &Heightfield) -> bool {
    let (roll, pitch, _) = state.euler();
    let clearance = state.position.z - field.height_at(state.position.x, state.position.y);
    roll.abs() > MAX_TILT || pitch.abs() > MAX_TILT || clearance < MIN_TORSO_CLEARANCE
}

/// Holds `target` for `steps` ticks.
pub fn settle(
    model: &RobotModel,
    state: &RobotState,
    target: &[f64; NUM_JOINTS],
    field: &Heightfield,
    steps: usize,
) -> Result<RobotState, PhysicsError> {
    let mut s = state.clone();
    for _ in 0..steps {
        s = step_lowlevel(model, &s, target, field, DEFAULT_DT)?;
    }
    s.time = state.time;
    Ok(s)
}
