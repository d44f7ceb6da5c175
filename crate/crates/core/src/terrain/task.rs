use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TerrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainType {
    Flat,
    Rugged,
    Holes,
    Obstacles,
    Stairs,
    Gaps,
    Hills,
    Cliff,
}

/// How a parameter is drawn from its interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Uniform real on `[low, high]`.
    Real,
    /// Uniform over the integers in `[ceil(low), floor(high)]`.
    Count,
}

impl TerrainType {
    pub const ALL: [TerrainType; 8] = [
        TerrainType::Flat,
        TerrainType::Rugged,
        TerrainType::Holes,
        TerrainType::Obstacles,
        TerrainType::Stairs,
        TerrainType::Gaps,
        TerrainType::Hills,
        TerrainType::Cliff,
    ];

    /// Parameter names in sampling order.
    pub fn schema(self) -> &'static [(&'static str, ParamKind)] {
        use ParamKind::*;
        match self {
            TerrainType::Flat => &[],
            TerrainType::Rugged => &[("h_min", Real), ("h_max", Real), ("sigma", Real)],
            TerrainType::Holes | TerrainType::Obstacles => &[("n", Count), ("h", Real)],
            TerrainType::Stairs => &[("h", Real), ("l", Real)],
            TerrainType::Gaps => &[("n", Count), ("gap_width", Count), ("gap_depth", Real)],
            TerrainType::Hills => &[("k", Count), ("amplitude", Real), ("radius", Real)],
            TerrainType::Cliff => &[("w_walk", Count), ("cliff_depth", Real)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainType::Flat => "flat",
            TerrainType::Rugged => "rugged",
            TerrainType::Holes => "holes",
            TerrainType::Obstacles => "obstacles",
            TerrainType::Stairs => "stairs",
            TerrainType::Gaps => "gaps",
            TerrainType::Hills => "hills",
            TerrainType::Cliff => "cliff",
        }
    }

    /// Types whose base level is exactly zero with isolated cells or bands
    /// displaced from it.
    pub fn is_sparse(self) -> bool {
        matches!(
            self,
            TerrainType::Holes | TerrainType::Obstacles | TerrainType::Gaps | TerrainType::Cliff
        )
    }
}

impl fmt::Display for TerrainType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainType {
    type Err = TerrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TerrainType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TerrainError::UnknownTerrainType(s.to_string()))
    }
}

/// One task: a terrain type plus the sampling interval of each of its
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub terrain_type: TerrainType,
    #[serde(default)]
    pub param_bounds: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(terrain_type: TerrainType) -> Self {
        Self { terrain_type, param_bounds: BTreeMap::new(), seed: 0 }
    }

    pub fn flat() -> Self {
        Self::new(TerrainType::Flat)
    }

    /// Builder: set the interval of `name`.
    pub fn bound(mut self, name: &str, low: f64, high: f64) -> Self {
        self.param_bounds.insert(name.to_string(), [low, high]);
        self
    }

    /// Builder: pin `name` to a single value.
    pub fn fixed(self, name: &str, value: f64) -> Self {
        self.bound(name, value, value)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Tall, dense obstacles.
    pub fn forest(count: [f64; 2], height: [f64; 2]) -> Self {
        Self::new(TerrainType::Obstacles)
            .bound("n", count[0], count[1])
            .bound("h", height[0].max(FOREST_MIN_HEIGHT), height[1].max(FOREST_MIN_HEIGHT))
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let schema = self.terrain_type.schema();
        for (name, [low, high]) in &self.param_bounds {
            if !schema.iter().any(|(n, _)| n == name) {
                return Err(TerrainError::UnexpectedParameter {
                    terrain: self.terrain_type,
                    name: name.clone(),
                });
            }
            if !(low.is_finite() && high.is_finite()) {
                return Err(TerrainError::InvalidParameter {
                    name: name.clone(),
                    reason: "bounds must be finite".into(),
                });
            }
            if low > high {
                return Err(TerrainError::DegenerateBounds { name: name.clone(), low: *low, high: *high });
            }
        }
        for (name, kind) in schema {
            let [low, high] = self.param_bounds.get(*name).copied().ok_or_else(|| {
                TerrainError::MissingParameter { terrain: self.terrain_type, name: name.to_string() }
            })?;
            if *kind == ParamKind::Count && (low < 0.0 || low.ceil() > high.floor()) {
                return Err(TerrainError::InvalidParameter {
                    name: name.to_string(),
                    reason: format!("[{low}, {high}] contains no nonnegative integer"),
                });
            }
        }
        let sign = |name: &str, want_negative: bool| -> Result<(), TerrainError> {
            let [low, high] = self.param_bounds[name];
            let ok = if want_negative { high <= 0.0 } else { low >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(TerrainError::InvalidParameter {
                    name: name.into(),
                    reason: format!("must be {}", if want_negative { "<= 0" } else { ">= 0" }),
                })
            }
        };
        match self.terrain_type {
            TerrainType::Holes => sign("h", true),
            TerrainType::Obstacles => sign("h", false),
            TerrainType::Rugged => sign("sigma", false),
            TerrainType::Stairs => {
                if self.param_bounds["l"][0] <= 0.0 {
                    return Err(TerrainError::InvalidParameter { name: "l".into(), reason: "must be > 0".into() });
                }
                Ok(())
            }
            TerrainType::Gaps => {
                sign("gap_depth", true)?;
                if self.param_bounds["gap_width"][0] < 1.0 {
                    return Err(TerrainError::InvalidParameter {
                        name: "gap_width".into(),
                        reason: "must allow at least one row".into(),
                    });
                }
                Ok(())
            }
            TerrainType::Hills => {
                sign("amplitude", false)?;
                if self.param_bounds["radius"][0] <= 0.0 {
                    return Err(TerrainError::InvalidParameter {
                        name: "radius".into(),
                        reason: "must be > 0".into(),
                    });
                }
                Ok(())
            }
            TerrainType::Cliff => sign("cliff_depth", true),
            TerrainType::Flat => Ok(()),
        }
    }

    /// Draws one value per schema parameter, in schema order.
    pub(crate) fn sample_params(&self, rng: &mut ChaCha8Rng) -> BTreeMap<&'static str, f64> {
        self.terrain_type
            .schema()
            .iter()
            .map(|&(name, kind)| {
                let [low, high] = self.param_bounds[name];
                let value = match kind {
                    ParamKind::Real => low + (high - low) * uniform01(rng),
                    ParamKind::Count => {
                        let lo = low.ceil() as u64;
                        let hi = high.floor() as u64;
                        (lo + rng.next_u64() % (hi - lo + 1)) as f64
                    }
                };
                (name, value)
            })
            .collect()
    }
}

const FOREST_MIN_HEIGHT: f64 = 0.5;

pub(crate) fn uniform01(rng: &mut impl RngCore) -> f64 {
    // 53 random mantissa bits.
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A weighted set of tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub entries: Vec<(TaskSpec, f64)>,
}

impl TaskDistribution {
    pub fn new(entries: Vec<(TaskSpec, f64)>) -> Result<Self, TerrainError> {
        let dist = Self { entries };
        dist.validate()?;
        Ok(dist)
    }

    pub fn single(spec: TaskSpec) -> Self {
        Self { entries: vec![(spec, 1.0)] }
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.entries.is_empty() {
            return Err(TerrainError::EmptyDistribution);
        }
        let mut total = 0.0;
        for (spec, w) in &self.entries {
            spec.validate()?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(TerrainError::InvalidWeights);
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(TerrainError::InvalidWeights);
        }
        Ok(())
    }

    /// Picks an entry with probability proportional to its weight and gives
    /// the returned spec a fresh seed derived from `seed`.
    pub fn sample_task(&self, seed: u64) -> Result<TaskSpec, TerrainError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index = WeightedIndex::new(self.entries.iter().map(|(_, w)| *w))
            .map_err(|_| TerrainError::InvalidWeights)?
            .sample(&mut rng);
        let mut spec = self.entries[index].0.clone();
        spec.seed = rng.next_u64();
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
