//! Least-squares fusion of sparse log-depth observations with predicted
//! gradient maps at multiple resolutions.
//!
//! For log-depth `d`, observations `O` with mask `M` and confidence `C`, and
//! per-level gradient targets `g_k`, the minimized objective is
//!
//! ```text
//!   alpha * sum_p M_p C_p (d_p - ln O_p)^2
//!     + sum_k ||diff(pool(d, 2^k)) - g_k||^2        (k = 0 .. R-1)
//! ```
//!
//! where `diff` takes forward differences (undefined boundary entries
//! excluded) and `pool` is the block average. The normal equations are
//! symmetric positive definite whenever one observation has positive
//! confidence, and are solved matrix-free by preconditioned conjugate
//! gradient. A dense direct solver over the explicitly assembled matrix
//! provides an independent cross-check for small grids.
//!
//! Internally the solve runs in a median-shifted frame: with
//! `m = median(O)`, substituting `d = d' + ln m` leaves the objective
//! unchanged (differences annihilate constants) but makes the arithmetic,
//! and therefore the result, independent of the absolute scale of `O` up to
//! the rounding of `ln`. Scaling every observation by `beta` scales the
//! completed depth by `beta`.

mod cg;
mod dense;

pub use dense::{solve_dense_oracle, DENSE_ORACLE_MAX_PIXELS};

use crate::grid::{ops, DepthGrid, DepthSpace, GradientPyramid, Grid, GridError, RgbImage, SparseObservation};
use crate::predictor::{GradientPredictor, PredictorError};
use crate::scalenorm::{self, ScaleNormError};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weight of the observation term relative to the gradient terms.
    pub alpha: f64,
    /// Number of pyramid levels R; level k is pooled by 2^k.
    pub num_resolutions: usize,
    /// CG stops when the residual drops below this fraction of ||rhs||.
    pub cg_rel_tol: f64,
    /// Iteration cap; `None` applies the 10 * H * W rule.
    pub cg_max_iters: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1.0,
            num_resolutions: 3,
            cg_rel_tol: 1e-8,
            cg_max_iters: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(IntegratorError::InvalidConfig("alpha must be positive and finite"));
        }
        if self.num_resolutions == 0 {
            return Err(IntegratorError::InvalidConfig("num_resolutions must be at least 1"));
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol < 1.0) {
            return Err(IntegratorError::InvalidConfig("cg_rel_tol must lie in (0, 1)"));
        }
        if self.cg_max_iters == Some(0) {
            return Err(IntegratorError::InvalidConfig("cg_max_iters must be at least 1"));
        }
        Ok(())
    }

    fn max_iters(&self, height: usize, width: usize) -> usize {
        self.cg_max_iters.unwrap_or(10 * height * width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_rel_residual: f64,
    /// Objective value at the returned solution, in the original (un-shifted)
    /// frame.
    pub energy: f64,
}

/// A solver result: `depth.space()` says whether it is log (from [`solve`])
/// or linear (from [`complete`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub depth: DepthGrid,
    pub report: SolveReport,
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("no observation with positive confidence")]
    NoObservations,
    #[error("grid {height}x{width} is not divisible by {factor} (needed for {levels} resolutions)")]
    DimensionNotDivisible {
        height: usize,
        width: usize,
        factor: usize,
        levels: usize,
    },
    #[error("observations are {obs_height}x{obs_width} but gradients are {pyr_height}x{pyr_width} with {pyr_levels} levels (expected {expected_levels})")]
    ShapeMismatch {
        obs_height: usize,
        obs_width: usize,
        pyr_height: usize,
        pyr_width: usize,
        pyr_levels: usize,
        expected_levels: usize,
    },
    #[error("CG stopped at relative residual {resid:.3e} without reaching tolerance", resid = .0.report.final_rel_residual)]
    DidNotConverge(Box<Solution>),
    #[error("{pixels} pixels exceeds the {limit}-pixel dense solver limit")]
    GridTooLarge { pixels: usize, limit: usize },
    #[error("invalid solver config: {0}")]
    InvalidConfig(&'static str),
    #[error("gradient predictor failed: {0}")]
    PredictorFailure(#[from] PredictorError),
    #[error(transparent)]
    ScaleNorm(#[from] ScaleNormError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The normal-equation operator `A d = alpha * M C d + sum_k A_k^T A_k d`
/// and its right-hand side, kept matrix-free.
pub struct NormalSystem {
    height: usize,
    width: usize,
    num_levels: usize,
    /// `alpha * confidence` at observed pixels, 0 elsewhere.
    weights: Vec<f64>,
    rhs: Grid,
}

impl NormalSystem {
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    #[inline]
    pub fn rhs(&self) -> &Grid {
        &self.rhs
    }

    /// One application of the SPD operator.
    pub fn apply(&self, d: &Grid) -> Grid {
        debug_assert_eq!(d.shape(), (self.height, self.width));
        let mut out = Grid::zeros(self.height, self.width);
        for k in 0..self.num_levels {
            let factor = 1usize << k;
            let pooled = ops::avg_pool(d, factor).expect("shape validated at assembly");
            let (gx, gy) = ops::finite_diff(&pooled);
            let adj = ops::diff_adjoint(&gx, &gy).expect("shapes agree by construction");
            let spread = ops::pool_adjoint(&adj, factor);
            for (o, s) in out.as_mut_slice().iter_mut().zip(spread.as_slice()) {
                *o += s;
            }
        }
        for (idx, o) in out.as_mut_slice().iter_mut().enumerate() {
            *o += self.weights[idx] * d.as_slice()[idx];
        }
        out
    }

    /// Exact diagonal of the operator. Per level, a coarse cell touched by
    /// `deg` difference constraints contributes `deg / factor^4` to each fine
    /// pixel of its block (each pooled entry carries weight 1/factor^2, and
    /// it is squared through the normal equations).
    pub fn jacobi_diagonal(&self) -> Grid {
        let mut diag = Grid::zeros(self.height, self.width);
        let d = diag.as_mut_slice();
        for (slot, &w) in d.iter_mut().zip(&self.weights) {
            *slot = w;
        }
        for k in 0..self.num_levels {
            let factor = 1usize << k;
            let (hk, wk) = (self.height / factor, self.width / factor);
            let inv_f4 = 1.0 / (factor as f64).powi(4);
            for r in 0..self.height {
                let rk = r / factor;
                for c in 0..self.width {
                    let ck = c / factor;
                    let deg = usize::from(ck > 0)
                        + usize::from(ck + 1 < wk)
                        + usize::from(rk > 0)
                        + usize::from(rk + 1 < hk);
                    d[r * self.width + c] += deg as f64 * inv_f4;
                }
            }
        }
        diag
    }
}

fn check_shapes(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
) -> Result<(), IntegratorError> {
    config.validate()?;
    let (h, w) = obs.shape();
    if pyramid.base_shape() != (h, w) || pyramid.num_levels() != config.num_resolutions {
        return Err(IntegratorError::ShapeMismatch {
            obs_height: h,
            obs_width: w,
            pyr_height: pyramid.base_shape().0,
            pyr_width: pyramid.base_shape().1,
            pyr_levels: pyramid.num_levels(),
            expected_levels: config.num_resolutions,
        });
    }
    let factor = 1usize << (config.num_resolutions - 1);
    if h % factor != 0 || w % factor != 0 {
        return Err(IntegratorError::DimensionNotDivisible {
            height: h,
            width: w,
            factor,
            levels: config.num_resolutions,
        });
    }
    Ok(())
}

/// `alpha * confidence` per pixel; errors if no pixel has positive weight.
fn observation_weights(
    obs: &SparseObservation,
    alpha: f64,
) -> Result<Vec<f64>, IntegratorError> {
    let mut any = false;
    let weights = obs
        .mask()
        .iter()
        .zip(obs.confidence())
        .map(|(&m, &c)| {
            if m && c > 0.0 {
                any = true;
                alpha * c
            } else {
                0.0
            }
        })
        .collect();
    if !any {
        return Err(IntegratorError::NoObservations);
    }
    Ok(weights)
}

fn assemble_with_shift(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
    shift: f64,
) -> Result<NormalSystem, IntegratorError> {
    check_shapes(obs, pyramid, config)?;
    let (height, width) = obs.shape();
    let weights = observation_weights(obs, config.alpha)?;

    let mut rhs = Grid::zeros(height, width);
    {
        let r = rhs.as_mut_slice();
        for (idx, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                r[idx] = w * (obs.values()[idx].ln() - shift);
            }
        }
    }
    for (k, (gx, gy)) in pyramid.levels().enumerate() {
        let factor = 1usize << k;
        let adj = ops::diff_adjoint(gx, gy).expect("pyramid levels share shapes");
        let spread = ops::pool_adjoint(&adj, factor);
        for (o, s) in rhs.as_mut_slice().iter_mut().zip(spread.as_slice()) {
            *o += s;
        }
    }

    Ok(NormalSystem {
        height,
        width,
        num_levels: config.num_resolutions,
        weights,
        rhs,
    })
}

/// Builds the normal-equation operator and right-hand side in the original
/// log frame (no median shift).
pub fn assemble_normal_system(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
) -> Result<NormalSystem, IntegratorError> {
    assemble_with_shift(obs, pyramid, config, 0.0)
}

/// Objective value of a log-depth candidate against observations and
/// gradient targets (boundary gradient entries excluded).
pub fn objective(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    alpha: f64,
    log_depth: &Grid,
) -> f64 {
    let mut total = 0.0;
    for (row, col, value, conf) in obs.iter_valid() {
        if conf > 0.0 {
            let d = log_depth.get(row, col);
            total += alpha * conf * (d - value.ln()).powi(2);
        }
    }
    for (k, (tgt_x, tgt_y)) in pyramid.levels().enumerate() {
        let factor = 1usize << k;
        let pooled = ops::avg_pool(log_depth, factor).expect("caller guarantees divisibility");
        let (gx, gy) = ops::finite_diff(&pooled);
        let (hk, wk) = pooled.shape();
        for r in 0..hk {
            for c in 1..wk {
                total += (gx.get(r, c) - tgt_x.get(r, c)).powi(2);
            }
        }
        for r in 1..hk {
            for c in 0..wk {
                total += (gy.get(r, c) - tgt_y.get(r, c)).powi(2);
            }
        }
    }
    total
}

/// Median observed depth over positive-confidence points. The solve is
/// shifted by its log so arithmetic is scale-free; confidence-zero points
/// are excluded so their presence cannot perturb the result at all.
fn log_median_shift(obs: &SparseObservation) -> Result<f64, IntegratorError> {
    let mut values: Vec<f64> = obs
        .iter_valid()
        .filter(|&(_, _, _, c)| c > 0.0)
        .map(|(_, _, v, _)| v)
        .collect();
    let med = scalenorm::median(&mut values).ok_or(IntegratorError::NoObservations)?;
    Ok(med.ln())
}

/// Solves the normal equations by preconditioned CG. The iteration starts
/// from the observations scattered onto the grid (zero where unobserved, in
/// the shifted frame). On non-convergence the best iterate is still
/// returned inside the error.
pub fn solve(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
) -> Result<Solution, IntegratorError> {
    let shift = {
        check_shapes(obs, pyramid, config)?;
        log_median_shift(obs)?
    };
    let system = assemble_with_shift(obs, pyramid, config, shift)?;
    let (height, width) = system.shape();

    let mut x0 = Grid::zeros(height, width);
    {
        let x = x0.as_mut_slice();
        for (idx, &w) in system.weights.iter().enumerate() {
            if w > 0.0 {
                x[idx] = obs.values()[idx].ln() - shift;
            }
        }
    }

    let inv_diag = match config.preconditioner {
        Preconditioner::Jacobi => Some(system.jacobi_diagonal().map(|v| 1.0 / v)),
        Preconditioner::None => None,
    };

    let outcome = cg::pcg(
        |v| system.apply(v),
        system.rhs(),
        x0,
        inv_diag.as_ref(),
        config.cg_rel_tol,
        config.max_iters(height, width),
    );

    let log_values: Vec<f64> = outcome.x.as_slice().iter().map(|&v| v + shift).collect();
    let depth = DepthGrid::from_dense(height, width, log_values, DepthSpace::Log)?;
    let energy = objective(obs, pyramid, config.alpha, &depth.to_grid()?);
    let solution = Solution {
        depth,
        report: SolveReport {
            iterations: outcome.iterations,
            final_rel_residual: outcome.rel_residual,
            energy,
        },
    };
    if outcome.converged {
        Ok(solution)
    } else {
        Err(IntegratorError::DidNotConverge(Box::new(solution)))
    }
}

/// Full completion: normalize observations, ask the predictor for gradient
/// targets, solve, and map back to linear depth. Only the predictor sees the
/// scale-normalized observations; the solve runs against the real `log(O)`.
pub fn complete(
    image: Option<&RgbImage>,
    obs: &SparseObservation,
    predictor: &dyn GradientPredictor,
    config: &SolverConfig,
) -> Result<Solution, IntegratorError> {
    config.validate()?;
    let normalized = scalenorm::normalize(obs)?;
    let pyramid = predictor.predict(image, &normalized, config.num_resolutions)?;
    if pyramid.base_shape() != obs.shape() {
        return Err(IntegratorError::ShapeMismatch {
            obs_height: obs.height(),
            obs_width: obs.width(),
            pyr_height: pyramid.base_shape().0,
            pyr_width: pyramid.base_shape().1,
            pyr_levels: pyramid.num_levels(),
            expected_levels: config.num_resolutions,
        });
    }
    match solve(obs, &pyramid, config) {
        Ok(solution) => Ok(Solution {
            depth: scalenorm::exp_map(&solution.depth)?,
            report: solution.report,
        }),
        Err(IntegratorError::DidNotConverge(solution)) => {
            let linear = scalenorm::exp_map(&solution.depth)?;
            Err(IntegratorError::DidNotConverge(Box::new(Solution {
                depth: linear,
                report: solution.report,
            })))
        }
        Err(e) => Err(e),
    }
}
