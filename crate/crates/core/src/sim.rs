//! Monte-Carlo validation of how gradient noise accumulates into depth
//! error.
//!
//! Integrating noisy gradients is a random walk: at distance `n` from the
//! nearest observation the accumulated log-depth error has variance
//! `n * sigma^2` when only full-resolution gradients are used. Pooled levels
//! shorten the walk (a level pooled by `2^k` crosses the same span in
//! `n / 2^k` steps), which is the mechanism the multi-resolution solver
//! exploits; [`simulate_solver_2d`] measures that effect on the real solver.
//!
//! Every trial derives its own RNG seed from the caller's generator, so
//! trials are independent of execution order and runs are reproducible.

use crate::grid::{DepthGrid, DepthSpace, Grid, GridError, SparseObservation};
use crate::integrator::{self, IntegratorError, SolverConfig};
use crate::predictor::{GradientPredictor, NoisyOraclePredictor, PredictorError};
use crate::scalenorm::{self, ScaleNormError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Fewer trials than this gives variance estimates too loose to act on.
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{got} trials is below the minimum of {MIN_TRIALS}")]
    TooFewTrials { got: usize },
    #[error("sigma must be nonnegative and finite, got {0}")]
    InvalidSigma(f64),
    #[error("profile length must be at least 1")]
    EmptyProfile,
    #[error("observation pattern is empty")]
    EmptyPattern,
    #[error("pattern pixel ({row}, {col}) is outside the {height}x{width} grid")]
    PatternOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    ScaleNorm(#[from] ScaleNormError),
}

/// Predicted-vs-measured error variance as a function of distance from the
/// anchor observation.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub distances: Vec<usize>,
    /// Closed-form `n * sigma^2`.
    pub analytic_var: Vec<f64>,
    /// Sample variance across trials.
    pub empirical_var: Vec<f64>,
    /// Half-width of the 95% interval of the error itself,
    /// `1.96 * sqrt(empirical_var)`.
    pub ci95_halfwidth: Vec<f64>,
}

impl VarianceProfile {
    /// Fixed-schema CSV: `distance,analytic_var,empirical_var,ci95`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance,analytic_var,empirical_var,ci95\n");
        for i in 0..self.distances.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.distances[i], self.analytic_var[i], self.empirical_var[i], self.ci95_halfwidth[i]
            ));
        }
        out
    }
}

/// Variance of a depth estimate `n` integration steps from the nearest
/// observation, with i.i.d. gradient noise of standard deviation `sigma`.
pub fn analytic_variance(sigma: f64, n: usize) -> f64 {
    n as f64 * sigma * sigma
}

/// Simulates pure 1D integration: ground truth is constant (true gradients
/// zero), the depth at index 0 is known exactly, and each trial integrates
/// `length` noisy gradients left to right. Returns the per-distance variance
/// profile over `trials` runs.
pub fn simulate_1d(
    sigma: f64,
    length: usize,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<VarianceProfile, SimError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimError::InvalidSigma(sigma));
    }
    if length == 0 {
        return Err(SimError::EmptyProfile);
    }
    if trials < MIN_TRIALS {
        return Err(SimError::TooFewTrials { got: trials });
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut sum = vec![0.0; length];
    let mut sum_sq = vec![0.0; length];
    for _ in 0..trials {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut acc = 0.0;
        for d in 0..length {
            acc += normal.sample(&mut trial_rng);
            sum[d] += acc;
            sum_sq[d] += acc * acc;
        }
    }
    let t = trials as f64;
    let mut empirical_var = Vec::with_capacity(length);
    for d in 0..length {
        let mean = sum[d] / t;
        empirical_var.push((sum_sq[d] - t * mean * mean) / (t - 1.0));
    }
    let distances: Vec<usize> = (1..=length).collect();
    let analytic_var: Vec<f64> = distances.iter().map(|&n| analytic_variance(sigma, n)).collect();
    let ci95_halfwidth = empirical_var.iter().map(|v| 1.96 * v.sqrt()).collect();
    Ok(VarianceProfile {
        distances,
        analytic_var,
        empirical_var,
        ci95_halfwidth,
    })
}

/// The canonical two-anchor strip: a `4 x length` grid observed exactly at
/// the middle row's two ends. Supports up to three pyramid levels for any
/// `length` divisible by 4.
pub fn two_anchor_strip(length: usize) -> ((usize, usize), Vec<(usize, usize)>) {
    assert!(length >= 2);
    ((4, length), vec![(2, 0), (2, length - 1)])
}

/// Runs the full solver repeatedly on a constant scene observed at
/// `pattern`, with gradient targets from a noisy oracle at `num_resolutions`
/// levels, and returns the per-pixel standard deviation of the log-depth
/// error. Constant ground truth means every pyramid entry is pure noise,
/// isolating the propagation behaviour of the solver itself.
pub fn simulate_solver_2d(
    grid_shape: (usize, usize),
    pattern: &[(usize, usize)],
    sigma: f64,
    num_resolutions: usize,
    trials: usize,
    config: &SolverConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Grid, SimError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimError::InvalidSigma(sigma));
    }
    if trials < MIN_TRIALS {
        return Err(SimError::TooFewTrials { got: trials });
    }
    if pattern.is_empty() {
        return Err(SimError::EmptyPattern);
    }
    let (height, width) = grid_shape;
    let n = height * width;
    let mut mask = vec![false; n];
    let mut values = vec![0.0; n];
    for &(row, col) in pattern {
        if row >= height || col >= width {
            return Err(SimError::PatternOutOfBounds {
                row,
                col,
                height,
                width,
            });
        }
        mask[row * width + col] = true;
        values[row * width + col] = 1.0;
    }
    let gt = DepthGrid::from_dense(height, width, vec![1.0; n], DepthSpace::Linear)?;
    let obs = SparseObservation::new(height, width, values, mask)?;
    let normalized = scalenorm::normalize(&obs)?;
    let cfg = SolverConfig {
        num_resolutions,
        ..config.clone()
    };

    // Welford accumulation of per-pixel mean and M2 across trials.
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for trial in 0..trials {
        let predictor = NoisyOraclePredictor::from_seed(&gt, sigma, rng.random())?;
        let pyramid = predictor.predict(None, &normalized, num_resolutions)?;
        let solution = integrator::solve(&obs, &pyramid, &cfg)?;
        // log(gt) == 0, so the solution values are the errors directly.
        let count = (trial + 1) as f64;
        for (idx, &err) in solution.depth.values().iter().enumerate() {
            let delta = err - mean[idx];
            mean[idx] += delta / count;
            m2[idx] += delta * (err - mean[idx]);
        }
    }
    let denom = (trials - 1) as f64;
    let std: Vec<f64> = m2.iter().map(|&v| (v / denom).sqrt()).collect();
    Ok(Grid::from_vec(height, width, std)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_law_is_linear_in_distance() {
        assert_eq!(analytic_variance(0.01, 16), 16.0 * 1e-4);
        assert_eq!(analytic_variance(0.05, 0), 0.0);
    }

    #[test]
    fn one_dimensional_walk_matches_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let profile = simulate_1d(0.02, 32, 2000, &mut rng).unwrap();
        for &d in &[4usize, 16, 32] {
            let i = d - 1;
            let ratio = profile.empirical_var[i] / profile.analytic_var[i];
            assert!(
                (0.85..=1.15).contains(&ratio),
                "distance {d}: ratio {ratio}"
            );
        }
        assert!(
            (profile.ci95_halfwidth[7] - 1.96 * profile.empirical_var[7].sqrt()).abs() < 1e-15
        );
    }

    #[test]
    fn zero_sigma_gives_zero_variance_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let profile = simulate_1d(0.0, 16, 100, &mut rng).unwrap();
        assert!(profile.empirical_var.iter().all(|&v| v == 0.0));
        let ((h, w), pattern) = two_anchor_strip(8);
        let std = simulate_solver_2d(
            (h, w),
            &pattern,
            0.0,
            2,
            100,
            &SolverConfig::default(),
            &mut rng,
        )
        .unwrap();
        let max = std.as_slice().iter().copied().fold(0.0, f64::max);
        assert!(max < 1e-6, "max std {max}");
    }

    #[test]
    fn dense_observations_suppress_error_regardless_of_levels() {
        let pattern: Vec<(usize, usize)> = (0..4).flat_map(|r| (0..8).map(move |c| (r, c))).collect();
        for levels in [1, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(56);
            let std = simulate_solver_2d(
                (4, 8),
                &pattern,
                0.05,
                levels,
                150,
                &SolverConfig::default(),
                &mut rng,
            )
            .unwrap();
            let max = std.as_slice().iter().copied().fold(0.0, f64::max);
            assert!(max < 0.05, "levels {levels}: max std {max} not below sigma");
        }
    }

    #[test]
    fn trial_floor_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        assert!(matches!(
            simulate_1d(0.02, 8, 99, &mut rng),
            Err(SimError::TooFewTrials { got: 99 })
        ));
    }

    #[test]
    fn profiles_are_reproducible() {
        let a = simulate_1d(0.05, 16, 200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = simulate_1d(0.05, 16, 200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_schema_is_fixed() {
        let profile = simulate_1d(0.05, 4, 100, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let csv = profile.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("distance,analytic_var,empirical_var,ci95"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn solver_error_std_shrinks_with_extra_levels() {
        let ((h, w), pattern) = two_anchor_strip(32);
        let cfg = SolverConfig::default();
        let mut stds = Vec::new();
        for levels in 1..=3 {
            // Cloned master rng pairs the noise streams across level counts.
            let mut rng = ChaCha8Rng::seed_from_u64(53);
            let std = simulate_solver_2d((h, w), &pattern, 0.05, levels, 300, &cfg, &mut rng)
                .unwrap();
            let max = std.as_slice().iter().copied().fold(0.0, f64::max);
            assert!(max.is_finite() && max > 0.0);
            stds.push(max);
        }
        assert!(
            stds[1] <= stds[0] && stds[2] <= stds[1],
            "max std not nonincreasing: {stds:?}"
        );
    }

    #[test]
    fn pattern_bounds_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        assert!(matches!(
            simulate_solver_2d((4, 8), &[(5, 0)], 0.05, 1, 100, &SolverConfig::default(), &mut rng),
            Err(SimError::PatternOutOfBounds { row: 5, .. })
        ));
    }
}
