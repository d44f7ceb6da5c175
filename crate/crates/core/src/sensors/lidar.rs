use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::physics::{Pose, RobotState};
use crate::terrain::Heightfield;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub channels: usize,
    /// Full vertical field of view in degrees, centered on the horizon.
    pub vertical_fov_deg: f64,
    pub azimuth_bins: usize,
    pub max_range: f64,
    pub noise_sigma: f64,
    /// Sensor origin in the torso frame.
    pub mount_offset: [f64; 3],
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            vertical_fov_deg: 30.0,
            azimuth_bins: 64,
            max_range: 10.0,
            noise_sigma: 0.02,
            mount_offset: [0.0, 0.0, 0.1],
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |what: &str| Err(SensorError::InvalidConfig(what.to_string()));
        if self.channels == 0 {
            return bad("lidar channels must be >= 1");
        }
        if self.azimuth_bins < 4 {
            return bad("lidar azimuth_bins must be >= 4");
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return bad("lidar max_range must be > 0");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("lidar noise_sigma must be >= 0");
        }
        if !(self.vertical_fov_deg >= 0.0 && self.vertical_fov_deg < 180.0) {
            return bad("lidar vertical_fov_deg must lie in [0, 180)");
        }
        if self.mount_offset.iter().any(|v| !v.is_finite()) {
            return bad("lidar mount_offset must be finite");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels * self.azimuth_bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elevation of channel `c` in radians, lowest channel first.
    pub fn elevation(&self, c: usize) -> f64 {
        if self.channels == 1 {
            return 0.0;
        }
        let half = 0.5 * self.vertical_fov_deg.to_radians();
        -half + 2.0 * half * c as f64 / (self.channels - 1) as f64
    }

    /// Azimuth of bin `k` in radians, counter-clockwise from the sensor's +x.
    pub fn azimuth(&self, k: usize) -> f64 {
        std::f64::consts::TAU * k as f64 / self.azimuth_bins as f64
    }

    /// Unit ray direction in the sensor frame.
    pub fn direction(&self, c: usize, k: usize) -> Vector3<f64> {
        let (se, ce) = self.elevation(c).sin_cos();
        let (sa, ca) = self.azimuth(k).sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }

    pub fn sensor_pose(&self, state: &RobotState) -> Pose {
        let offset = Vector3::from(self.mount_offset);
        Pose::new(state.position + state.orientation * offset, state.orientation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    pub channels: usize,
    pub azimuth_bins: usize,
    pub max_range: f64,
    /// Row-major by channel, then azimuth.
    pub distances: Vec<f64>,
}

impl LidarScan {
    pub fn distance(&self, channel: usize, bin: usize) -> f64 {
        self.distances[channel * self.azimuth_bins + bin]
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d / self.max_range).collect()
    }
}

/// Casts every ray of the scan pattern from `pose` and returns noisy ranges.
pub fn raycast_scan(config: &LidarConfig, pose: &Pose, field: &Heightfield, seed: u64) -> LidarScan {
    let rot = pose.orientation.to_rotation_matrix();
    let mut distances = Vec::with_capacity(config.len());
    for c in 0..config.channels {
        for k in 0..config.azimuth_bins {
            let dir = rot * config.direction(c, k);
            distances.push(cast_ray(field, &pose.position, &dir, config.max_range));
        }
    }
    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
        for d in &mut distances {
            *d = (*d + normal.sample(&mut rng)).clamp(0.0, config.max_range);
        }
    }
    LidarScan { channels: config.channels, azimuth_bins: config.azimuth_bins, max_range: config.max_range, distances }
}

/// First parameter in `[a, b]` where the ray is at or below height `h`.
fn hit_span(origin: &Vector3<f64>, dir: &Vector3<f64>, h: f64, a: f64, b: f64) -> Option<f64> {
    if origin.z + dir.z * a <= h {
        return Some(a);
    }
    if dir.z < 0.0 {
        let t = (h - origin.z) / dir.z;
        if t <= b {
            return Some(t);
        }
    }
    None
}

/// Cell containing the ray start along one axis. On a cell edge a ray moving
/// up enters the upper cell; otherwise the edge belongs to the lower cell, as
/// in `Heightfield::cell_at`.
fn start_index(p: f64, cell: f64, n: isize, d: f64) -> isize {
    let k = p / cell;
    let idx = if d > 0.0 { k.floor() } else { k.ceil() - 1.0 };
    (idx as isize).clamp(0, n - 1)
}

/// Distance along the unit ray `dir` to the first pillar top or side face,
/// or `max_range` when nothing is hit. Outside the grid the ground sits at
/// the field's out-of-bounds depth.
pub fn cast_ray(field: &Heightfield, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> f64 {
    let oob = field.out_of_bounds_depth();
    let [gx, gy] = field.origin();
    let (l, w) = (field.cell_length(), field.cell_width());
    let (rows, cols) = (field.rows() as isize, field.cols() as isize);

    let mut t_in: f64 = 0.0;
    let mut t_out = max_range;
    for (o, d, lo, hi) in [(origin.x, dir.x, gx, gx + field.length()), (origin.y, dir.y, gy, gy + field.width())] {
        if d == 0.0 {
            if o < lo || o > hi {
                t_out = -1.0;
            }
        } else {
            let (t1, t2) = ((lo - o) / d, (hi - o) / d);
            t_in = t_in.max(t1.min(t2));
            t_out = t_out.min(t1.max(t2));
        }
    }
    if t_in > t_out {
        return hit_span(origin, dir, oob, 0.0, max_range).unwrap_or(max_range);
    }
    if t_in > 0.0 {
        if let Some(t) = hit_span(origin, dir, oob, 0.0, t_in) {
            return t;
        }
    }

    let px = origin.x + dir.x * t_in - gx;
    let py = origin.y + dir.y * t_in - gy;
    let mut i = start_index(px, l, rows, dir.x);
    let mut j = start_index(py, w, cols, dir.y);
    let (step_i, step_j) = (if dir.x >= 0.0 { 1 } else { -1 }, if dir.y >= 0.0 { 1 } else { -1 });
    let boundary = |idx: isize, step: isize, cell: f64, g: f64, o: f64, d: f64| {
        if d == 0.0 {
            f64::INFINITY
        } else {
            let edge = g + (idx + if step > 0 { 1 } else { 0 }) as f64 * cell;
            (edge - o) / d
        }
    };
    let mut t_max_x = boundary(i, step_i, l, gx, origin.x, dir.x);
    let mut t_max_y = boundary(j, step_j, w, gy, origin.y, dir.y);
    let t_delta_x = if dir.x == 0.0 { f64::INFINITY } else { l / dir.x.abs() };
    let t_delta_y = if dir.y == 0.0 { f64::INFINITY } else { w / dir.y.abs() };
    let top = field.max_height().max(oob);

    let mut t = t_in;
    loop {
        let h = field.get(i as usize, j as usize);
        let t_next = t_max_x.min(t_max_y).min(t_out);
        if let Some(hit) = hit_span(origin, dir, h, t, t_next) {
            return hit;
        }
        if t_next >= t_out {
            break;
        }
        if dir.z >= 0.0 && origin.z + dir.z * t_next > top {
            return max_range;
        }
        if t_max_x < t_max_y {
            i += step_i;
            t_max_x += t_delta_x;
        } else {
            j += step_j;
            t_max_y += t_delta_y;
        }
        if i < 0 || i >= rows || j < 0 || j >= cols {
            break;
        }
        t = t_next;
    }
    if t_out < max_range {
        if let Some(hit) = hit_span(origin, dir, oob, t_out, max_range) {
            return hit;
        }
    }
    max_range
}
