//! Depth evaluation: standard completion metrics, least-squares scale/shift
//! alignment for baselines that predict depth only up to an affine
//! transform, and a ground-truth consistency filter.
//!
//! Metrics operate on raw value grids plus an explicit pixel mask rather
//! than on masked depth grids. That keeps non-positive predictions (which
//! scale/shift alignment can produce) representable: they fail the delta1
//! threshold and poison the inverse-depth metrics to infinity instead of
//! being silently excluded from the average.

use crate::grid::{DepthGrid, DepthSpace, Grid, GridError, SparseObservation};
use serde::Serialize;
use thiserror::Error;

/// delta1 accuracy threshold: a pixel passes when both depth ratios are
/// strictly below this value.
pub const DELTA1_THRESHOLD: f64 = 1.25;

/// Inverse-depth metrics are reported in this unit (inputs in meters).
pub const INVERSE_DEPTH_UNIT: &str = "1/km";

const METERS_PER_KILOMETER: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no pixels selected for evaluation")]
    EmptyMask,
    #[error("ground truth at ({row}, {col}) is {value} but must be positive and finite")]
    NonPositiveGt { row: usize, col: usize, value: f64 },
    #[error("prediction is {pred_height}x{pred_width} but ground truth is {gt_height}x{gt_width}")]
    ShapeMismatch {
        pred_height: usize,
        pred_width: usize,
        gt_height: usize,
        gt_width: usize,
    },
    #[error("valid mask has {got} entries for a {expected}-pixel grid")]
    MaskLength { expected: usize, got: usize },
    #[error("rmse scale divisor must be positive and finite, got {0}")]
    InvalidDivisor(f64),
    #[error("neighbor threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("scale-shift alignment needs at least 2 usable points, found {0}")]
    DegenerateFit(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Error metrics over the evaluated pixels. `rmse` is already divided by
/// `rmse_scale_divisor`; every other field is unscaled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub rel: f64,
    pub delta1: f64,
    pub irmse: f64,
    pub imae: f64,
    pub valid_pixel_count: usize,
    pub rmse_scale_divisor: f64,
    pub inverse_unit: &'static str,
}

impl MetricsReport {
    /// Column order is fixed; `rmse_scale_divisor` and the unit tag are
    /// report metadata, not columns.
    pub fn csv_header() -> &'static str {
        "rmse,mae,rel,delta1,irmse,imae,valid_pixel_count"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.rmse, self.mae, self.rel, self.delta1, self.irmse, self.imae, self.valid_pixel_count
        )
    }
}

/// Computes all metrics over the pixels where `valid_mask` is set.
///
/// Ground truth must be positive and finite at every evaluated pixel.
/// Predictions may be arbitrary finite reals; non-positive predictions fail
/// delta1 and contribute infinity to the inverse-depth metrics.
pub fn compute_metrics(
    pred: &Grid,
    gt: &Grid,
    valid_mask: &[bool],
    rmse_scale_divisor: f64,
) -> Result<MetricsReport, EvalError> {
    if !pred.same_shape(gt) {
        return Err(EvalError::ShapeMismatch {
            pred_height: pred.height(),
            pred_width: pred.width(),
            gt_height: gt.height(),
            gt_width: gt.width(),
        });
    }
    if valid_mask.len() != gt.len() {
        return Err(EvalError::MaskLength {
            expected: gt.len(),
            got: valid_mask.len(),
        });
    }
    if !(rmse_scale_divisor > 0.0 && rmse_scale_divisor.is_finite()) {
        return Err(EvalError::InvalidDivisor(rmse_scale_divisor));
    }
    let width = gt.width();
    let mut count = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut delta1_hits = 0usize;
    let mut inv_abs_sum = 0.0;
    let mut inv_sq_sum = 0.0;
    for (idx, &keep) in valid_mask.iter().enumerate() {
        if !keep {
            continue;
        }
        let g = gt.as_slice()[idx];
        if !(g > 0.0 && g.is_finite()) {
            return Err(EvalError::NonPositiveGt {
                row: idx / width,
                col: idx % width,
                value: g,
            });
        }
        let p = pred.as_slice()[idx];
        count += 1;
        let diff = (p - g).abs();
        abs_sum += diff;
        sq_sum += diff * diff;
        rel_sum += diff / g;
        let ratio = if p > 0.0 {
            (p / g).max(g / p)
        } else {
            f64::INFINITY
        };
        if ratio < DELTA1_THRESHOLD {
            delta1_hits += 1;
        }
        let inv_diff = if p > 0.0 {
            (METERS_PER_KILOMETER / p - METERS_PER_KILOMETER / g).abs()
        } else {
            f64::INFINITY
        };
        inv_abs_sum += inv_diff;
        inv_sq_sum += inv_diff * inv_diff;
    }
    if count == 0 {
        return Err(EvalError::EmptyMask);
    }
    let n = count as f64;
    Ok(MetricsReport {
        rmse: (sq_sum / n).sqrt() / rmse_scale_divisor,
        mae: abs_sum / n,
        rel: rel_sum / n,
        delta1: delta1_hits as f64 / n,
        irmse: (inv_sq_sum / n).sqrt(),
        imae: inv_abs_sum / n,
        valid_pixel_count: count,
        rmse_scale_divisor,
        inverse_unit: INVERSE_DEPTH_UNIT,
    })
}

/// Convenience wrapper: evaluates where both grids are valid. Both must be
/// linear-space depth.
pub fn compute_depth_metrics(
    pred: &DepthGrid,
    gt: &DepthGrid,
    rmse_scale_divisor: f64,
) -> Result<MetricsReport, EvalError> {
    for grid in [pred, gt] {
        if grid.space() != DepthSpace::Linear {
            return Err(GridError::SpaceMismatch {
                expected: DepthSpace::Linear,
                got: grid.space(),
            }
            .into());
        }
    }
    let mask: Vec<bool> = pred
        .valid()
        .iter()
        .zip(gt.valid())
        .map(|(&a, &b)| a && b)
        .collect();
    let pred_grid = Grid::from_vec(pred.height(), pred.width(), pred.values().to_vec())?;
    let gt_grid = Grid::from_vec(gt.height(), gt.width(), gt.values().to_vec())?;
    compute_metrics(&pred_grid, &gt_grid, &mask, rmse_scale_divisor)
}

/// Space in which the affine alignment is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentSpace {
    Depth,
    /// Fit on reciprocals; the recovered transform is affine in 1/depth.
    Disparity,
}

/// Result of fitting `s * x + t` from prediction to sparse reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub scale: f64,
    pub shift: f64,
    /// Set when the prediction was constant at the reference points and the
    /// fit fell back to scale-only with zero shift.
    pub scale_only: bool,
    /// Transformed prediction in depth space with non-positive or
    /// non-finite pixels invalidated.
    pub aligned: DepthGrid,
    /// Transformed prediction as raw values (zero where the input was
    /// invalid); feed this to [`compute_metrics`] so out-of-range pixels
    /// are penalized rather than dropped.
    pub raw: Grid,
}

/// Least-squares fit of a global scale and shift mapping `pred` onto the
/// sparse reference values, in depth or disparity space.
///
/// Uses every reference point where the prediction is valid, unweighted.
/// Fewer than two usable points is an error; a constant prediction falls
/// back to the best scale with zero shift and sets `scale_only`.
pub fn align_scale_shift(
    pred: &DepthGrid,
    sparse: &SparseObservation,
    space: AlignmentSpace,
) -> Result<Alignment, EvalError> {
    if pred.shape() != sparse.shape() {
        return Err(EvalError::ShapeMismatch {
            pred_height: pred.height(),
            pred_width: pred.width(),
            gt_height: sparse.height(),
            gt_width: sparse.width(),
        });
    }
    if pred.space() != DepthSpace::Linear {
        return Err(GridError::SpaceMismatch {
            expected: DepthSpace::Linear,
            got: pred.space(),
        }
        .into());
    }
    let to_fit_space = |depth: f64| match space {
        AlignmentSpace::Depth => depth,
        AlignmentSpace::Disparity => depth.recip(),
    };
    let mut n = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (row, col, value, _) in sparse.iter_valid() {
        let Some(p) = pred.get(row, col) else {
            continue;
        };
        let x = to_fit_space(p);
        let y = to_fit_space(value);
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if n < 2.0 {
        return Err(EvalError::DegenerateFit(n as usize));
    }
    // Positive inputs make sxx > 0, so the spread test is well scaled.
    let det = n * sxx - sx * sx;
    let (scale, shift, scale_only) = if det <= 1e-12 * n * sxx {
        (sxy / sxx, 0.0, true)
    } else {
        let s = (n * sxy - sx * sy) / det;
        (s, (sy - s * sx) / n, false)
    };

    let (height, width) = pred.shape();
    let mut raw = vec![0.0; height * width];
    let mut valid = vec![false; height * width];
    for idx in 0..raw.len() {
        if !pred.valid()[idx] {
            continue;
        }
        let mapped = scale * to_fit_space(pred.values()[idx]) + shift;
        let depth = match space {
            AlignmentSpace::Depth => mapped,
            AlignmentSpace::Disparity => mapped.recip(),
        };
        raw[idx] = depth;
        valid[idx] = depth.is_finite() && depth > 0.0;
    }
    let aligned_values = raw
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| if ok { v } else { 0.0 })
        .collect();
    Ok(Alignment {
        scale,
        shift,
        scale_only,
        aligned: DepthGrid::new(height, width, aligned_values, valid, DepthSpace::Linear)?,
        raw: Grid::from_vec(height, width, raw)?,
    })
}

/// Invalidates pixels whose depth differs from any valid 8-neighbor by more
/// than `rel_threshold`, relative to the pixel's own depth. Useful for
/// ground truth whose object boundaries carry mixed foreground/background
/// measurements.
pub fn filter_gt_neighbors(gt: &DepthGrid, rel_threshold: f64) -> Result<DepthGrid, EvalError> {
    if !(rel_threshold > 0.0 && rel_threshold.is_finite()) {
        return Err(EvalError::InvalidThreshold(rel_threshold));
    }
    if gt.space() != DepthSpace::Linear {
        return Err(GridError::SpaceMismatch {
            expected: DepthSpace::Linear,
            got: gt.space(),
        }
        .into());
    }
    let (height, width) = gt.shape();
    let mut valid = gt.valid().to_vec();
    for row in 0..height {
        for col in 0..width {
            let Some(center) = gt.get(row, col) else {
                continue;
            };
            let mut keep = true;
            'neighbors: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                        continue;
                    }
                    if let Some(neighbor) = gt.get(nr as usize, nc as usize) {
                        if (neighbor - center).abs() / center > rel_threshold {
                            keep = false;
                            break 'neighbors;
                        }
                    }
                }
            }
            if !keep {
                valid[row * width + col] = false;
            }
        }
    }
    let values = gt
        .values()
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| if ok { v } else { 0.0 })
        .collect();
    Ok(DepthGrid::new(height, width, values, valid, DepthSpace::Linear)?)
}
