//! Gradient predictors: the pluggable source of per-level log-depth
//! gradient targets.
//!
//! A learned model would implement [`GradientPredictor`] on top of the RGB
//! image and the scale-normalized observations. The implementations shipped
//! here are the reference baselines: all-zero gradients (pure interpolation
//! of the observations), exact gradients derived from a ground-truth grid,
//! and the same corrupted by i.i.d. Gaussian noise for error-propagation
//! studies.

use crate::grid::{ops, DepthGrid, GradientPyramid, GridError, RgbImage};
use crate::scalenorm::{self, NormalizedObservation, ScaleNormError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("predictor expects a {expected_height}x{expected_width} scene, got {got_height}x{got_width}")]
    ShapeMismatch {
        expected_height: usize,
        expected_width: usize,
        got_height: usize,
        got_width: usize,
    },
    #[error("noise level must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    ScaleNorm(#[from] ScaleNormError),
}

pub trait GradientPredictor {
    /// Produces gradient targets for `num_resolutions` levels matching the
    /// observation shape. Implementations must be deterministic: identical
    /// inputs (and internal state such as a stored RNG seed) give identical
    /// pyramids.
    fn predict(
        &self,
        image: Option<&RgbImage>,
        obs: &NormalizedObservation,
        num_resolutions: usize,
    ) -> Result<GradientPyramid, PredictorError>;
}

/// Predicts zero gradients everywhere: completion reduces to smoothly
/// interpolating the observations.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl GradientPredictor for ZeroPredictor {
    fn predict(
        &self,
        _image: Option<&RgbImage>,
        obs: &NormalizedObservation,
        num_resolutions: usize,
    ) -> Result<GradientPyramid, PredictorError> {
        Ok(GradientPyramid::zeros(
            obs.height(),
            obs.width(),
            num_resolutions,
        )?)
    }
}

/// Predicts the exact gradients of a known ground-truth grid: level `k`
/// holds the forward differences of the log ground truth pooled by `2^k`.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    log_gt: crate::grid::Grid,
}

impl OraclePredictor {
    /// `gt` must be a dense linear-depth grid.
    pub fn new(gt: &DepthGrid) -> Result<Self, PredictorError> {
        let log_gt = scalenorm::log_map(gt)?.to_grid()?;
        Ok(OraclePredictor { log_gt })
    }
}

impl GradientPredictor for OraclePredictor {
    fn predict(
        &self,
        _image: Option<&RgbImage>,
        obs: &NormalizedObservation,
        num_resolutions: usize,
    ) -> Result<GradientPyramid, PredictorError> {
        if obs.shape() != self.log_gt.shape() {
            return Err(PredictorError::ShapeMismatch {
                expected_height: self.log_gt.height(),
                expected_width: self.log_gt.width(),
                got_height: obs.height(),
                got_width: obs.width(),
            });
        }
        Ok(GradientPyramid::from_log_grid(&self.log_gt, num_resolutions)?)
    }
}

/// Oracle gradients plus i.i.d. Gaussian noise of standard deviation
/// `sigma` on every entry of every level. The RNG state is fixed at
/// construction and cloned per call, so repeated predictions are identical;
/// level 0 is drawn first, which pairs runs that differ only in the number
/// of levels.
#[derive(Debug, Clone)]
pub struct NoisyOraclePredictor {
    oracle: OraclePredictor,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoisyOraclePredictor {
    pub fn new(gt: &DepthGrid, sigma: f64, rng: ChaCha8Rng) -> Result<Self, PredictorError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(PredictorError::InvalidSigma(sigma));
        }
        Ok(NoisyOraclePredictor {
            oracle: OraclePredictor::new(gt)?,
            sigma,
            rng,
        })
    }

    pub fn from_seed(gt: &DepthGrid, sigma: f64, seed: u64) -> Result<Self, PredictorError> {
        NoisyOraclePredictor::new(gt, sigma, ChaCha8Rng::seed_from_u64(seed))
    }
}

impl GradientPredictor for NoisyOraclePredictor {
    fn predict(
        &self,
        image: Option<&RgbImage>,
        obs: &NormalizedObservation,
        num_resolutions: usize,
    ) -> Result<GradientPyramid, PredictorError> {
        let clean = self.oracle.predict(image, obs, num_resolutions)?;
        let mut rng = self.rng.clone();
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated at construction");
        let mut levels = Vec::with_capacity(clean.num_levels());
        for (gx, gy) in clean.levels() {
            let mut noisy_x = gx.clone();
            for v in noisy_x.as_mut_slice().iter_mut() {
                *v += normal.sample(&mut rng);
            }
            let mut noisy_y = gy.clone();
            for v in noisy_y.as_mut_slice().iter_mut() {
                *v += normal.sample(&mut rng);
            }
            levels.push((noisy_x, noisy_y));
        }
        Ok(GradientPyramid::new(levels)?)
    }
}

/// Exact pooled-difference targets for a dense log grid; exposed for tests
/// that need pyramids without a predictor.
pub fn oracle_pyramid(log_gt: &crate::grid::Grid, num_resolutions: usize) -> Result<GradientPyramid, GridError> {
    GradientPyramid::from_log_grid(log_gt, num_resolutions)
}

/// Convenience: exact finite differences of a pooled grid, used by tests.
pub fn pooled_differences(log_gt: &crate::grid::Grid, factor: usize) -> Result<(crate::grid::Grid, crate::grid::Grid), GridError> {
    Ok(ops::finite_diff(&ops::avg_pool(log_gt, factor)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DepthSpace, Grid, SparseObservation};

    fn normalized(h: usize, w: usize) -> NormalizedObservation {
        let mut values = vec![0.0; h * w];
        let mut mask = vec![false; h * w];
        values[0] = 2.0;
        mask[0] = true;
        values[h * w - 1] = 4.0;
        mask[h * w - 1] = true;
        let obs = SparseObservation::new(h, w, values, mask).unwrap();
        scalenorm::normalize(&obs).unwrap()
    }

    #[test]
    fn zero_predictor_matches_requested_shape() {
        let pyr = ZeroPredictor
            .predict(None, &normalized(8, 12), 3)
            .unwrap();
        assert_eq!(pyr.num_levels(), 3);
        assert_eq!(pyr.base_shape(), (8, 12));
        assert_eq!(pyr.level(2).0.shape(), (2, 3));
        assert!(pyr
            .levels()
            .all(|(gx, gy)| gx.as_slice().iter().all(|&v| v == 0.0)
                && gy.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn oracle_matches_pooled_differences() {
        let gt_grid = Grid::from_fn(8, 8, |r, c| 1.0 + 0.1 * r as f64 + 0.05 * (c * c) as f64);
        let gt = DepthGrid::from_grid(&gt_grid, DepthSpace::Linear).unwrap();
        let pred = OraclePredictor::new(&gt).unwrap();
        let pyr = pred.predict(None, &normalized(8, 8), 2).unwrap();
        let log_gt = gt_grid.map(f64::ln);
        let (gx, gy) = pooled_differences(&log_gt, 2).unwrap();
        assert_eq!(pyr.level(1).0, &gx);
        assert_eq!(pyr.level(1).1, &gy);
    }

    #[test]
    fn same_seed_same_pyramid() {
        let gt = DepthGrid::from_dense(4, 4, vec![2.0; 16], DepthSpace::Linear).unwrap();
        let a = NoisyOraclePredictor::from_seed(&gt, 0.05, 7).unwrap();
        let b = NoisyOraclePredictor::from_seed(&gt, 0.05, 7).unwrap();
        let obs = normalized(4, 4);
        let pa = a.predict(None, &obs, 2).unwrap();
        let pb = b.predict(None, &obs, 2).unwrap();
        for ((xa, ya), (xb, yb)) in pa.levels().zip(pb.levels()) {
            assert_eq!(xa, xb);
            assert_eq!(ya, yb);
        }
        // Repeated calls on the same predictor are also identical.
        let pc = a.predict(None, &obs, 2).unwrap();
        assert_eq!(pa.level(0).0, pc.level(0).0);
    }

    #[test]
    fn first_level_noise_is_shared_across_depths() {
        let gt = DepthGrid::from_dense(8, 8, vec![2.0; 64], DepthSpace::Linear).unwrap();
        let pred = NoisyOraclePredictor::from_seed(&gt, 0.05, 9).unwrap();
        let obs = normalized(8, 8);
        let one = pred.predict(None, &obs, 1).unwrap();
        let three = pred.predict(None, &obs, 3).unwrap();
        assert_eq!(one.level(0).0, three.level(0).0);
        assert_eq!(one.level(0).1, three.level(0).1);
    }

    #[test]
    fn noise_std_matches_sigma_within_two_percent() {
        let sigma = 0.05;
        let (h, w) = (256, 256);
        let gt = DepthGrid::from_dense(h, w, vec![3.0; h * w], DepthSpace::Linear).unwrap();
        let pred = NoisyOraclePredictor::from_seed(&gt, sigma, 21).unwrap();
        let pyr = pred.predict(None, &normalized(h, w), 1).unwrap();
        // Constant gt: the clean targets are exactly zero, so the pyramid
        // entries are the raw noise. 2 * 65536 samples.
        let (gx, gy) = pyr.level(0);
        let samples: Vec<f64> = gx.as_slice().iter().chain(gy.as_slice()).copied().collect();
        assert!(samples.len() >= 100_000);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (samples.len() - 1) as f64;
        let std = var.sqrt();
        assert!(
            (std - sigma).abs() <= 0.02 * sigma,
            "std {std} vs sigma {sigma}"
        );
    }

    #[test]
    fn oracle_rejects_shape_mismatch() {
        let gt = DepthGrid::from_dense(4, 4, vec![2.0; 16], DepthSpace::Linear).unwrap();
        let pred = OraclePredictor::new(&gt).unwrap();
        assert!(matches!(
            pred.predict(None, &normalized(8, 8), 1).unwrap_err(),
            PredictorError::ShapeMismatch { .. }
        ));
    }
}
