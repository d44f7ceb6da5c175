//! Multi-task reinforcement learning for a simulated quadruped walking over
//! procedurally generated pillar terrains.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod terrain;
pub mod physics;
pub mod sensors;
pub mod pmtg;
pub mod env;
pub mod neuralnet;
pub mod trainer;
pub mod harness;
