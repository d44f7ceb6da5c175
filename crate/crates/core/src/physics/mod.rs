//! Simplified quadruped dynamics: one rigid torso, massless three-joint
//! legs driven by saturated PD motors, penalty contact against pillar tops.

mod dynamics;
mod kinematics;
mod model;

pub use dynamics::{
    is_fallen, pd_torques, settle, step_lowlevel, RobotState, DEFAULT_DT, MAX_TILT, MIN_TORSO_CLEARANCE,
};
pub use kinematics::{
    forward_kinematics, inverse_kinematics, leg_fk, leg_jacobian, nominal_pose, IkSolution, Pose,
    FK_LIMIT_TOLERANCE,
};
pub use model::{ContactParams, Leg, RobotModel, NUM_JOINTS, NUM_LEGS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("non-finite robot state or joint target")]
    NonFiniteInput,
    #[error("simulation produced a non-finite state at t = {time}")]
    Fault { time: f64 },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}
