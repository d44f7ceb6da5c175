use super::TerrainError;

/// Default depth reported for queries that fall off the grid.
pub const DEFAULT_OUT_OF_BOUNDS_DEPTH: f64 = -10.0;

/// A grid of flat-topped pillars.
///
/// Rows advance along world +x (each row is `cell_length` long), columns
/// advance along world +y (each column is `cell_width` wide). `origin` is the
/// world position of the corner of cell (0, 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Heightfield {
    rows: usize,
    cols: usize,
    cell_length: f64,
    cell_width: f64,
    heights: Vec<f64>,
    origin: [f64; 2],
    out_of_bounds_depth: f64,
    range: (f64, f64),
}

impl Heightfield {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_length: f64,
        cell_width: f64,
        heights: Vec<f64>,
        origin: [f64; 2],
    ) -> Result<Self, TerrainError> {
        if rows == 0 || cols == 0 {
            return Err(TerrainError::InvalidGrid(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if !(cell_length > 0.0 && cell_length.is_finite() && cell_width > 0.0 && cell_width.is_finite()) {
            return Err(TerrainError::InvalidGrid(format!(
                "cell dimensions must be positive, got {cell_length}x{cell_width}"
            )));
        }
        if heights.len() != rows * cols {
            return Err(TerrainError::InvalidGrid(format!(
                "expected {} heights, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if let Some(bad) = heights.iter().position(|h| !h.is_finite()) {
            return Err(TerrainError::InvalidGrid(format!("height at index {bad} is not finite")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(TerrainError::InvalidGrid("origin must be finite".into()));
        }
        let range = min_max(&heights);
        Ok(Self {
            rows,
            cols,
            cell_length,
            cell_width,
            heights,
            origin,
            out_of_bounds_depth: DEFAULT_OUT_OF_BOUNDS_DEPTH,
            range,
        })
    }

    /// A field of constant height.
    pub fn constant(rows: usize, cols: usize, cell: f64, height: f64) -> Result<Self, TerrainError> {
        Self::new(rows, cols, cell, cell, vec![height; rows * cols], [0.0, 0.0])
    }

    pub fn with_origin(mut self, origin: [f64; 2]) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_out_of_bounds_depth(mut self, depth: f64) -> Self {
        self.out_of_bounds_depth = depth;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn out_of_bounds_depth(&self) -> f64 {
        self.out_of_bounds_depth
    }

    /// Row-major heights.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.heights[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.heights[i * self.cols..(i + 1) * self.cols]
    }

    /// World-space extent along x.
    pub fn length(&self) -> f64 {
        self.rows as f64 * self.cell_length
    }

    /// World-space extent along y.
    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_width
    }

    pub fn min_height(&self) -> f64 {
        self.range.0
    }

    pub fn max_height(&self) -> f64 {
        self.range.1
    }

    /// Index of the cell containing `(x, y)`. Boundaries belong to the
    /// lower-index cell; the grid's outer edges are inclusive.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = axis_index(x - self.origin[0], self.cell_length, self.rows)?;
        let j = axis_index(y - self.origin[1], self.cell_width, self.cols)?;
        Some((i, j))
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_at(x, y) {
            Some((i, j)) => self.get(i, j),
            None => self.out_of_bounds_depth,
        }
    }

    /// World-space center of cell (i, j).
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_length,
            self.origin[1] + (j as f64 + 0.5) * self.cell_width,
        ]
    }

}

fn axis_index(offset: f64, cell: f64, count: usize) -> Option<usize> {
    if !offset.is_finite() || offset < 0.0 || offset > cell * count as f64 {
        return None;
    }
    let k = (offset / cell).ceil() as usize;
    Some(k.saturating_sub(1).min(count - 1))
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stairs() -> Heightfield {
        let heights = (0..4).flat_map(|i| std::iter::repeat(0.1 * i as f64).take(3)).collect();
        Heightfield::new(4, 3, 0.3, 0.25, heights, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Heightfield::new(0, 3, 0.25, 0.25, vec![], [0.0, 0.0]).is_err());
        assert!(Heightfield::new(1, 1, 0.0, 0.25, vec![0.0], [0.0, 0.0]).is_err());
        assert!(Heightfield::new(1, 1, 0.25, 0.25, vec![f64::NAN], [0.0, 0.0]).is_err());
        assert!(Heightfield::new(2, 2, 0.25, 0.25, vec![0.0; 3], [0.0, 0.0]).is_err());
    }

    #[test]
    fn flat_query_is_zero() {
        let f = Heightfield::constant(8, 8, 0.25, 0.0).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1.0, 1.3), (2.0, 2.0), (0.125, 1.999)] {
            assert_eq!(f.height_at(x, y), 0.0);
        }
    }

    #[test]
    fn boundary_belongs_to_lower_cell() {
        let f = stairs();
        // x = 0.6 is the edge between rows 1 and 2.
        assert_eq!(f.height_at(0.6, 0.1), 0.1);
        assert_eq!(f.height_at(0.6 + 1e-9, 0.1), 0.2);
        assert_eq!(f.height_at(0.75, 0.4), 0.2);
        assert_eq!(f.height_at(0.0, 0.0), 0.0);
        assert_eq!(f.height_at(1.2, 0.75), f.get(3, 2));
    }

    #[test]
    fn outside_extent_is_sentinel() {
        let f = stairs();
        assert_eq!(f.height_at(1.2 + 1e-3, 0.1), -10.0);
        assert_eq!(f.height_at(-1e-3, 0.1), -10.0);
        assert_eq!(f.height_at(0.1, 0.75 + 1e-3), -10.0);
        let g = stairs().with_out_of_bounds_depth(-3.0);
        assert_eq!(g.height_at(5.0, 5.0), -3.0);
    }

    #[test]
    fn origin_shifts_queries() {
        let f = stairs().with_origin([-1.0, 2.0]);
        assert_eq!(f.height_at(-1.0 + 0.75, 2.1), 0.2);
        assert_eq!(f.height_at(0.75, 0.1), -10.0);
    }
}
