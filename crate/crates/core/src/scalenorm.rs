//! Median-based scale normalization between linear depth and log-depth.
//!
//! Sparse inputs arrive in arbitrary metric scale. Dividing by the median
//! observed depth (equivalently, subtracting the log-median in log space)
//! maps every input to a canonical scale of 1.0 before it reaches a gradient
//! predictor, so a predictor never sees the absolute scale of the scene.

use crate::grid::{DepthGrid, DepthSpace, GridError, SparseObservation};
use thiserror::Error;

/// Depths at or below this are rejected as degenerate rather than clamped;
/// log() must stay well away from -inf.
pub const MIN_DEPTH: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ScaleNormError {
    #[error("no observed pixels to normalize")]
    NoObservations,
    #[error("observed depth {value:.3e} at ({row}, {col}) is below the {MIN_DEPTH:.0e} floor")]
    NonPositiveDepth { row: usize, col: usize, value: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Log-depth observations shifted so the median observed depth maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedObservation {
    height: usize,
    width: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    log_median: f64,
}

impl NormalizedObservation {
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

    /// `log(O) - log(median(O))` at observed pixels, 0 elsewhere.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// The subtracted log-median; add it back to undo the normalization.
    #[inline]
    pub fn log_median(&self) -> f64 {
        self.log_median
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Median with the usual even-count convention: mean of the two middle
/// elements.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Shifts observations into median-normalized log space.
pub fn normalize(obs: &SparseObservation) -> Result<NormalizedObservation, ScaleNormError> {
    let width = obs.width();
    for (idx, (&v, &m)) in obs.values().iter().zip(obs.mask()).enumerate() {
        if m && v <= MIN_DEPTH {
            return Err(ScaleNormError::NonPositiveDepth {
                row: idx / width,
                col: idx % width,
                value: v,
            });
        }
    }
    let mut observed: Vec<f64> = obs.iter_valid().map(|(_, _, v, _)| v).collect();
    let med = median(&mut observed).ok_or(ScaleNormError::NoObservations)?;
    let log_median = med.ln();
    let values = obs
        .values()
        .iter()
        .zip(obs.mask())
        .map(|(&v, &m)| if m { v.ln() - log_median } else { 0.0 })
        .collect();
    Ok(NormalizedObservation {
        height: obs.height(),
        width,
        values,
        mask: obs.mask().to_vec(),
        log_median,
    })
}

/// Elementwise log of the observed depths, without the median shift. The
/// result is a log-space grid valid exactly where the observation mask is
/// set.
pub fn to_log(obs: &SparseObservation) -> Result<DepthGrid, ScaleNormError> {
    let width = obs.width();
    for (idx, (&v, &m)) in obs.values().iter().zip(obs.mask()).enumerate() {
        if m && v <= MIN_DEPTH {
            return Err(ScaleNormError::NonPositiveDepth {
                row: idx / width,
                col: idx % width,
                value: v,
            });
        }
    }
    let values = obs
        .values()
        .iter()
        .zip(obs.mask())
        .map(|(&v, &m)| if m { v.ln() } else { 0.0 })
        .collect();
    Ok(DepthGrid::new(
        obs.height(),
        width,
        values,
        obs.mask().to_vec(),
        DepthSpace::Log,
    )?)
}

/// Elementwise log of a linear-depth grid.
pub fn log_map(grid: &DepthGrid) -> Result<DepthGrid, ScaleNormError> {
    if grid.space() != DepthSpace::Linear {
        return Err(GridError::SpaceMismatch {
            expected: DepthSpace::Linear,
            got: grid.space(),
        }
        .into());
    }
    let width = grid.width();
    for (idx, (&v, &m)) in grid.values().iter().zip(grid.valid()).enumerate() {
        if m && v <= MIN_DEPTH {
            return Err(ScaleNormError::NonPositiveDepth {
                row: idx / width,
                col: idx % width,
                value: v,
            });
        }
    }
    let values = grid
        .values()
        .iter()
        .zip(grid.valid())
        .map(|(&v, &m)| if m { v.ln() } else { 0.0 })
        .collect();
    Ok(DepthGrid::new(
        grid.height(),
        width,
        values,
        grid.valid().to_vec(),
        DepthSpace::Log,
    )?)
}

/// Elementwise exp of a log-depth grid back to linear depth.
pub fn exp_map(grid: &DepthGrid) -> Result<DepthGrid, ScaleNormError> {
    if grid.space() != DepthSpace::Log {
        return Err(GridError::SpaceMismatch {
            expected: DepthSpace::Log,
            got: grid.space(),
        }
        .into());
    }
    let values = grid
        .values()
        .iter()
        .zip(grid.valid())
        .map(|(&v, &m)| if m { v.exp() } else { 0.0 })
        .collect();
    Ok(DepthGrid::new(
        grid.height(),
        grid.width(),
        values,
        grid.valid().to_vec(),
        DepthSpace::Linear,
    )?)
}
