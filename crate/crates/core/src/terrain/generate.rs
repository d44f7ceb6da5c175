use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::task::uniform01;
use super::{Heightfield, TaskSpec, TerrainError, TerrainType};

/// Grid dimensions used by the generators. Stairs override `cell_length`
/// with the sampled step length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cell_length: f64,
    pub cell_width: f64,
    pub origin: [f64; 2],
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self { rows: 64, cols: 64, cell_length: 0.25, cell_width: 0.25, origin: [0.0, 0.0] }
    }
}

impl GridGeometry {
    pub fn sized(rows: usize, cols: usize) -> Self {
        Self { rows, cols, ..Self::default() }
    }

    fn cells(&self) -> usize {
        self.rows * self.cols
    }

    fn build(&self, heights: Vec<f64>) -> Result<Heightfield, TerrainError> {
        Heightfield::new(self.rows, self.cols, self.cell_length, self.cell_width, heights, self.origin)
    }
}

/// Which sign the displaced cells of a sparse field take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparseKind {
    Holes,
    Obstacles,
}

pub fn generate(spec: &TaskSpec, rows: usize, cols: usize) -> Result<Heightfield, TerrainError> {
    generate_with(spec, &GridGeometry::sized(rows, cols))
}

/// Samples every parameter of `spec` uniformly from its interval (seeded by
/// `spec.seed`) and builds the terrain.
pub fn generate_with(spec: &TaskSpec, geometry: &GridGeometry) -> Result<Heightfield, TerrainError> {
    spec.validate()?;
    if geometry.rows < 2 || geometry.cols < 2 {
        return Err(TerrainError::InvalidGrid(format!(
            "generated grids need at least 2x2 cells, got {}x{}",
            geometry.rows, geometry.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.sample_params(&mut rng);
    let seed = rng.next_u64();
    match spec.terrain_type {
        TerrainType::Flat => geometry.build(vec![0.0; geometry.cells()]),
        TerrainType::Rugged => {
            let (lo, hi) = if p["h_min"] <= p["h_max"] {
                (p["h_min"], p["h_max"])
            } else {
                (p["h_max"], p["h_min"])
            };
            generate_rugged(lo, hi, p["sigma"], geometry, seed)
        }
        TerrainType::Holes => generate_sparse(SparseKind::Holes, p["n"] as usize, p["h"], geometry, seed),
        TerrainType::Obstacles => {
            generate_sparse(SparseKind::Obstacles, p["n"] as usize, p["h"], geometry, seed)
        }
        TerrainType::Stairs => generate_stairs(p["h"], p["l"], geometry),
        TerrainType::Gaps => {
            generate_gaps(p["n"] as usize, p["gap_width"] as usize, p["gap_depth"], geometry, seed)
        }
        TerrainType::Hills => generate_hills(p["k"] as usize, p["amplitude"], p["radius"], geometry, seed),
        TerrainType::Cliff => generate_cliff(p["w_walk"] as usize, p["cliff_depth"], geometry),
    }
}

/// Uniform random heights on `[h_min, h_max]`, then Gaussian smoothing with
/// standard deviation `sigma` cells.
pub fn generate_rugged(
    h_min: f64,
    h_max: f64,
    sigma: f64,
    geometry: &GridGeometry,
    seed: u64,
) -> Result<Heightfield, TerrainError> {
    if !(sigma >= 0.0) {
        return Err(TerrainError::InvalidParameter { name: "sigma".into(), reason: "must be >= 0".into() });
    }
    if h_min > h_max {
        return Err(TerrainError::DegenerateBounds { name: "h".into(), low: h_min, high: h_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..geometry.cells()).map(|_| h_min + (h_max - h_min) * uniform01(&mut rng)).collect();
    let heights = smooth(&raw, geometry.rows, geometry.cols, sigma)?;
    // Rounding in the weighted sums can land a hair outside the interval.
    let heights = heights.into_iter().map(|h| h.clamp(h_min, h_max)).collect();
    geometry.build(heights)
}

/// Normalized, truncated Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur of a row-major grid with clamp-to-edge indexing.
pub fn smooth(values: &[f64], rows: usize, cols: usize, sigma: f64) -> Result<Vec<f64>, TerrainError> {
    if !(sigma >= 0.0) {
        return Err(TerrainError::InvalidParameter { name: "sigma".into(), reason: "must be >= 0".into() });
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let clamp = |k: i64, len: usize| k.clamp(0, len as i64 - 1) as usize;

    let mut along_cols = vec![0.0; values.len()];
    for i in 0..rows {
        for j in 0..cols {
            along_cols[i * cols + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * values[i * cols + clamp(j as i64 + t as i64 - radius, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * along_cols[clamp(i as i64 + t as i64 - radius, rows) * cols + j])
                .sum();
        }
    }
    Ok(out)
}

/// Flat field with exactly `count` distinct cells set to `magnitude`.
pub fn generate_sparse(
    kind: SparseKind,
    count: usize,
    magnitude: f64,
    geometry: &GridGeometry,
    seed: u64,
) -> Result<Heightfield, TerrainError> {
    let cells = geometry.cells();
    if count > cells {
        return Err(TerrainError::InvalidParameter {
            name: "n".into(),
            reason: format!("{count} cells requested from a grid of {cells}"),
        });
    }
    let sign_ok = match kind {
        SparseKind::Holes => magnitude <= 0.0,
        SparseKind::Obstacles => magnitude >= 0.0,
    };
    if !sign_ok {
        return Err(TerrainError::InvalidParameter {
            name: "h".into(),
            reason: format!("{kind:?} height has the wrong sign: {magnitude}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heights = vec![0.0; cells];
    for k in index::sample(&mut rng, cells, count) {
        heights[k] = magnitude;
    }
    geometry.build(heights)
}

/// Rows rise by `step_height` each; every row is `step_length` long.
pub fn generate_stairs(step_height: f64, step_length: f64, geometry: &GridGeometry) -> Result<Heightfield, TerrainError> {
    let geometry = GridGeometry { cell_length: step_length, ..*geometry };
    let mut heights = vec![0.0; geometry.cells()];
    let mut level = 0.0;
    for i in 0..geometry.rows {
        heights[i * geometry.cols..(i + 1) * geometry.cols].fill(level);
        level += step_height;
    }
    geometry.build(heights)
}

/// `count` full-width bands of `gap_width` rows dropped to `gap_depth`.
/// Bands sit in disjoint slots of `2 * gap_width` rows, so no two bands merge.
pub fn generate_gaps(
    count: usize,
    gap_width: usize,
    gap_depth: f64,
    geometry: &GridGeometry,
    seed: u64,
) -> Result<Heightfield, TerrainError> {
    if gap_width == 0 {
        return Err(TerrainError::InvalidParameter { name: "gap_width".into(), reason: "must be >= 1".into() });
    }
    let slots = geometry.rows / (2 * gap_width);
    if count > slots {
        return Err(TerrainError::InvalidParameter {
            name: "n".into(),
            reason: format!("{count} gaps of width {gap_width} do not fit in {} rows", geometry.rows),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heights = vec![0.0; geometry.cells()];
    for slot in index::sample(&mut rng, slots, count) {
        let first = slot * 2 * gap_width + gap_width;
        for i in first..first + gap_width {
            heights[i * geometry.cols..(i + 1) * geometry.cols].fill(gap_depth);
        }
    }
    geometry.build(heights)
}

/// Envelope (pointwise max) of `k` radial Gaussian bumps of the given
/// amplitude and radius (meters), centered uniformly over the field.
pub fn generate_hills(
    k: usize,
    amplitude: f64,
    radius: f64,
    geometry: &GridGeometry,
    seed: u64,
) -> Result<Heightfield, TerrainError> {
    if !(radius > 0.0) || !(amplitude >= 0.0) {
        return Err(TerrainError::InvalidParameter {
            name: "radius".into(),
            reason: format!("need radius > 0 and amplitude >= 0, got {radius}, {amplitude}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = [geometry.rows as f64 * geometry.cell_length, geometry.cols as f64 * geometry.cell_width];
    let centers: Vec<[f64; 2]> = (0..k)
        .map(|_| [uniform01(&mut rng) * extent[0], uniform01(&mut rng) * extent[1]])
        .collect();
    let mut heights = vec![0.0; geometry.cells()];
    for i in 0..geometry.rows {
        for j in 0..geometry.cols {
            let x = (i as f64 + 0.5) * geometry.cell_length;
            let y = (j as f64 + 0.5) * geometry.cell_width;
            heights[i * geometry.cols + j] = centers
                .iter()
                .map(|c| {
                    let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                    amplitude * (-d2 / (2.0 * radius * radius)).exp()
                })
                .fold(0.0, f64::max);
        }
    }
    geometry.build(heights)
}

/// A walkway `w_walk` columns wide running along +x, centered across the
/// field, with everything else dropped to `cliff_depth`.
pub fn generate_cliff(w_walk: usize, cliff_depth: f64, geometry: &GridGeometry) -> Result<Heightfield, TerrainError> {
    if w_walk == 0 || w_walk > geometry.cols {
        return Err(TerrainError::InvalidParameter {
            name: "w_walk".into(),
            reason: format!("walkway of {w_walk} columns on a grid of {}", geometry.cols),
        });
    }
    let first = (geometry.cols - w_walk) / 2;
    let mut heights = vec![cliff_depth; geometry.cells()];
    for i in 0..geometry.rows {
        heights[i * geometry.cols + first..i * geometry.cols + first + w_walk].fill(0.0);
    }
    geometry.build(heights)
}
