//! Procedural heightfield terrains.
//!
//! Each [`TaskSpec`] names a terrain type and the interval every parameter
//! of that type is drawn from. [`generate`] samples the parameters with the
//! spec's seed and builds a [`Heightfield`] with the type's rule.

mod generate;
mod heightfield;
pub mod io;
mod task;

pub use generate::{
    gaussian_kernel, generate, generate_cliff, generate_gaps, generate_hills, generate_rugged,
    generate_sparse, generate_stairs, generate_with, smooth, GridGeometry, SparseKind,
};
pub use heightfield::{Heightfield, DEFAULT_OUT_OF_BOUNDS_DEPTH};
pub use task::{ParamKind, TaskDistribution, TaskSpec, TerrainType};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("unknown terrain type `{0}`")]
    UnknownTerrainType(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("parameter `{name}`: low {low} > high {high}")]
    DegenerateBounds { name: String, low: f64, high: f64 },
    #[error("{terrain} is missing parameter `{name}`")]
    MissingParameter { terrain: TerrainType, name: String },
    #[error("{terrain} has no parameter `{name}`")]
    UnexpectedParameter { terrain: TerrainType, name: String },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("empty task distribution")]
    EmptyDistribution,
    #[error("task distribution weights must be nonnegative and sum to a positive value")]
    InvalidWeights,
}
