//! Dense and sparse grid containers shared by every stage of the pipeline.
//!
//! Conventions used throughout the crate:
//! - grids are row-major, indexed `(row, col)`;
//! - `gx` is the horizontal forward difference `v[r][c] - v[r][c-1]`, stored
//!   as 0 at column 0 where it is undefined and ignored by all consumers;
//! - `gy` is the vertical forward difference `v[r][c] - v[r-1][c]`, ignored
//!   at row 0;
//! - pooling factors are powers of two and pyramid level `k` (0-based) is
//!   pooled by `2^k` relative to full resolution.

use thiserror::Error;

pub mod ops;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions {height}x{width} are invalid (need at least {min_side} per side)")]
    InvalidDimensions {
        height: usize,
        width: usize,
        min_side: usize,
    },
    #[error("data length {got} does not match {height}x{width}")]
    DataLength {
        height: usize,
        width: usize,
        got: usize,
    },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("depth at ({row}, {col}) is not strictly positive")]
    NonPositiveDepth { row: usize, col: usize },
    #[error("confidence at ({row}, {col}) is outside [0, 1]")]
    ConfidenceOutOfRange { row: usize, col: usize },
    #[error("grid {height}x{width} is not divisible by pooling factor {factor}")]
    DimensionNotDivisible {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("shape mismatch: expected {expected_height}x{expected_width}, got {got_height}x{got_width}")]
    ShapeMismatch {
        expected_height: usize,
        expected_width: usize,
        got_height: usize,
        got_width: usize,
    },
    #[error("operation requires a dense grid but ({row}, {col}) is invalid")]
    NotDense { row: usize, col: usize },
    #[error("operation requires a {expected:?}-space grid, got {got:?}")]
    SpaceMismatch { expected: DepthSpace, got: DepthSpace },
}

/// Interpretation of the scalar stored per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthSpace {
    /// Metric depth; valid entries are strictly positive and finite.
    Linear,
    /// Natural log of depth; valid entries are finite.
    Log,
}

/// Plain dense 2D array of f64, the workhorse for solver iterates, gradient
/// maps and loss inputs. Unlike [`DepthGrid`] it carries no validity mask or
/// positivity constraint and may be as small as 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "grid must be at least 1x1");
        Grid {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::InvalidDimensions {
                height,
                width,
                min_side: 1,
            });
        }
        if data.len() != height * width {
            return Err(GridError::DataLength {
                height,
                width,
                got: data.len(),
            });
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = Grid::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                g.data[r * width + c] = f(r, c);
            }
        }
        g
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        let mut g = Grid::zeros(height, width);
        g.data.fill(value);
        g
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }
}

/// Depth map with per-pixel validity. The minimum 2x2 size guarantees that
/// at least one finite difference exists in each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    space: DepthSpace,
}

impl DepthGrid {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
        space: DepthSpace,
    ) -> Result<Self, GridError> {
        if height < 2 || width < 2 {
            return Err(GridError::InvalidDimensions {
                height,
                width,
                min_side: 2,
            });
        }
        if values.len() != height * width {
            return Err(GridError::DataLength {
                height,
                width,
                got: values.len(),
            });
        }
        if valid.len() != height * width {
            return Err(GridError::DataLength {
                height,
                width,
                got: valid.len(),
            });
        }
        let mut values = values;
        for idx in 0..values.len() {
            let (row, col) = (idx / width, idx % width);
            if valid[idx] {
                let v = values[idx];
                if !v.is_finite() {
                    return Err(GridError::NonFinite { row, col });
                }
                if space == DepthSpace::Linear && v <= 0.0 {
                    return Err(GridError::NonPositiveDepth { row, col });
                }
            } else {
                values[idx] = 0.0;
            }
        }
        Ok(DepthGrid {
            height,
            width,
            values,
            valid,
            space,
        })
    }

    /// All-valid grid from raw values.
    pub fn from_dense(
        height: usize,
        width: usize,
        values: Vec<f64>,
        space: DepthSpace,
    ) -> Result<Self, GridError> {
        let n = values.len();
        DepthGrid::new(height, width, values, vec![true; n], space)
    }

    pub fn from_grid(grid: &Grid, space: DepthSpace) -> Result<Self, GridError> {
        DepthGrid::from_dense(grid.height(), grid.width(), grid.as_slice().to_vec(), space)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn space(&self) -> DepthSpace {
        self.space
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.width + col;
        self.valid[idx].then(|| self.values[idx])
    }

    pub fn is_dense(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }

    /// Dense view as a plain [`Grid`]. Requires every pixel valid.
    pub fn to_grid(&self) -> Result<Grid, GridError> {
        if let Some(idx) = self.valid.iter().position(|&v| !v) {
            return Err(GridError::NotDense {
                row: idx / self.width,
                col: idx % self.width,
            });
        }
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self.values.clone(),
        })
    }

    /// Forward differences of a dense log-depth grid, boundary entries stored
    /// as zero and ignored downstream.
    pub fn finite_diff(&self) -> Result<(Grid, Grid), GridError> {
        if self.space != DepthSpace::Log {
            return Err(GridError::SpaceMismatch {
                expected: DepthSpace::Log,
                got: self.space,
            });
        }
        Ok(ops::finite_diff(&self.to_grid()?))
    }
}

/// Sparse depth observations on a grid: positive finite values under `mask`,
/// together with a per-pixel confidence in `[0, 1]` (1.0 unless set).
/// A confidence of exactly 0 makes a point behave as if it were absent.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseObservation {
    height: usize,
    width: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    confidence: Vec<f64>,
}

impl SparseObservation {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, GridError> {
        let conf = vec![1.0; height * width];
        SparseObservation::with_confidence(height, width, values, mask, conf)
    }

    pub fn with_confidence(
        height: usize,
        width: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
        confidence: Vec<f64>,
    ) -> Result<Self, GridError> {
        if height < 2 || width < 2 {
            return Err(GridError::InvalidDimensions {
                height,
                width,
                min_side: 2,
            });
        }
        let n = height * width;
        for (len, _) in [(values.len(), "values"), (mask.len(), "mask"), (confidence.len(), "confidence")] {
            if len != n {
                return Err(GridError::DataLength {
                    height,
                    width,
                    got: len,
                });
            }
        }
        let mut values = values;
        let mut confidence = confidence;
        for idx in 0..n {
            let (row, col) = (idx / width, idx % width);
            if mask[idx] {
                let v = values[idx];
                if !v.is_finite() {
                    return Err(GridError::NonFinite { row, col });
                }
                if v <= 0.0 {
                    return Err(GridError::NonPositiveDepth { row, col });
                }
                let c = confidence[idx];
                if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                    return Err(GridError::ConfidenceOutOfRange { row, col });
                }
            } else {
                values[idx] = 0.0;
                confidence[idx] = 0.0;
            }
        }
        Ok(SparseObservation {
            height,
            width,
            values,
            mask,
            confidence,
        })
    }

    /// Treats valid pixels of a linear-space depth grid as observations.
    pub fn from_depth_grid(grid: &DepthGrid) -> Result<Self, GridError> {
        if grid.space() != DepthSpace::Linear {
            return Err(GridError::SpaceMismatch {
                expected: DepthSpace::Linear,
                got: grid.space(),
            });
        }
        SparseObservation::new(
            grid.height(),
            grid.width(),
            grid.values().to_vec(),
            grid.valid().to_vec(),
        )
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(row, col, value, confidence)` for every observed pixel, row-major.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let width = self.width;
        self.mask.iter().enumerate().filter_map(move |(idx, &m)| {
            m.then(|| {
                (
                    idx / width,
                    idx % width,
                    self.values[idx],
                    self.confidence[idx],
                )
            })
        })
    }

    /// Same observations with every depth multiplied by `beta > 0`.
    pub fn scaled(&self, beta: f64) -> Result<Self, GridError> {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { v * beta } else { 0.0 })
            .collect();
        SparseObservation::with_confidence(
            self.height,
            self.width,
            values,
            self.mask.clone(),
            self.confidence.clone(),
        )
    }

    /// Sparse depth map view (invalid where unobserved), e.g. for writing to
    /// disk.
    pub fn to_depth_grid(&self) -> Result<DepthGrid, GridError> {
        DepthGrid::new(
            self.height,
            self.width,
            self.values.clone(),
            self.mask.clone(),
            DepthSpace::Linear,
        )
    }
}

/// Per-level horizontal/vertical gradient maps. Level `k` (0-based) has shape
/// `(H / 2^k, W / 2^k)`; the base shape must divide exactly down to the
/// coarsest level. Entries at `gx` column 0 and `gy` row 0 are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPyramid {
    levels: Vec<(Grid, Grid)>,
}

impl GradientPyramid {
    pub fn new(levels: Vec<(Grid, Grid)>) -> Result<Self, GridError> {
        assert!(!levels.is_empty(), "pyramid needs at least one level");
        let (h, w) = levels[0].0.shape();
        for (k, (gx, gy)) in levels.iter().enumerate() {
            let factor = 1usize << k;
            if h % factor != 0 || w % factor != 0 {
                return Err(GridError::DimensionNotDivisible {
                    height: h,
                    width: w,
                    factor,
                });
            }
            let expected = (h / factor, w / factor);
            for g in [gx, gy] {
                if g.shape() != expected {
                    return Err(GridError::ShapeMismatch {
                        expected_height: expected.0,
                        expected_width: expected.1,
                        got_height: g.height(),
                        got_width: g.width(),
                    });
                }
                if let Some(idx) = g.as_slice().iter().position(|v| !v.is_finite()) {
                    return Err(GridError::NonFinite {
                        row: idx / g.width(),
                        col: idx % g.width(),
                    });
                }
            }
        }
        Ok(GradientPyramid { levels })
    }

    /// All-zero pyramid for a base shape.
    pub fn zeros(height: usize, width: usize, num_levels: usize) -> Result<Self, GridError> {
        assert!(num_levels >= 1);
        let mut levels = Vec::with_capacity(num_levels);
        for k in 0..num_levels {
            let factor = 1usize << k;
            if height % factor != 0 || width % factor != 0 {
                return Err(GridError::DimensionNotDivisible {
                    height,
                    width,
                    factor,
                });
            }
            levels.push((
                Grid::zeros(height / factor, width / factor),
                Grid::zeros(height / factor, width / factor),
            ));
        }
        Ok(GradientPyramid { levels })
    }

    /// Pyramid consistent with a dense log grid: level `k` holds the forward
    /// differences of the grid average-pooled by `2^k`.
    pub fn from_log_grid(log_grid: &Grid, num_levels: usize) -> Result<Self, GridError> {
        assert!(num_levels >= 1);
        let mut levels = Vec::with_capacity(num_levels);
        for k in 0..num_levels {
            let pooled = ops::avg_pool(log_grid, 1usize << k)?;
            levels.push(ops::finite_diff(&pooled));
        }
        Ok(GradientPyramid { levels })
    }

    #[inline]
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn base_shape(&self) -> (usize, usize) {
        self.levels[0].0.shape()
    }

    /// `(gx, gy)` at 0-based level `k` (pool factor `2^k`).
    #[inline]
    pub fn level(&self, k: usize) -> (&Grid, &Grid) {
        let (gx, gy) = &self.levels[k];
        (gx, gy)
    }

    pub fn levels(&self) -> impl Iterator<Item = (&Grid, &Grid)> {
        self.levels.iter().map(|(gx, gy)| (gx, gy))
    }
}

/// Minimal RGB container for predictors that condition on an image. Channel
/// values are free-range f64 (no assumed gamma or bounds), finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<[f64; 3]>) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::InvalidDimensions {
                height,
                width,
                min_side: 1,
            });
        }
        if data.len() != height * width {
            return Err(GridError::DataLength {
                height,
                width,
                got: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|px| px.iter().any(|v| !v.is_finite())) {
            return Err(GridError::NonFinite {
                row: idx / width,
                col: idx % width,
            });
        }
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        self.data[row * self.width + col]
    }

    /// Rec. 601 luma, the grayscale input for keypoint detection.
    pub fn luma(&self) -> Grid {
        Grid::from_fn(self.height, self.width, |r, c| {
            let [red, green, blue] = self.pixel(r, c);
            0.299 * red + 0.587 * green + 0.114 * blue
        })
    }
}
