//! Training losses for gradient predictors: masked L1, Laplacian negative
//! log-likelihood with a learned per-pixel scale, multi-scale gradient
//! matching on the residual, their fixed-weight combination, and a binary
//! cross-entropy for observation-confidence heads.
//!
//! All losses return analytic gradients where training needs them; the
//! gradients are validated against central finite differences in the test
//! suite.

use crate::grid::{ops, Grid, GridError};
use thiserror::Error;

/// Weight of the masked L1 term in [`combined_loss`].
pub const L1_WEIGHT: f64 = 1.0;
/// Weight of the Laplacian NLL term in [`combined_loss`].
pub const LAPLACIAN_WEIGHT: f64 = 0.5;
/// Weight of the gradient-matching term in [`combined_loss`].
pub const GRADIENT_MATCHING_WEIGHT: f64 = 2.0;
/// Number of dyadic scales in [`gradient_matching_loss`].
pub const GRADIENT_MATCHING_SCALES: usize = 4;
/// Default floor on the log-scale parameter gamma.
pub const GAMMA_MIN_DEFAULT: f64 = -2.0;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("no pixels selected by the mask")]
    EmptyMask,
    #[error("grid {height}x{width} is not divisible by {factor} (needed for {GRADIENT_MATCHING_SCALES} scales)")]
    DimensionNotDivisible {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("shape mismatch: {expected_height}x{expected_width} vs {got_height}x{got_width}")]
    ShapeMismatch {
        expected_height: usize,
        expected_width: usize,
        got_height: usize,
        got_width: usize,
    },
    #[error("mask length {got} does not match {expected} pixels")]
    MaskLength { expected: usize, got: usize },
    #[error("confidence {value} at index {index} is outside (0, 1)")]
    ConfidenceOutOfRange { index: usize, value: f64 },
    #[error("length mismatch: {a} confidences vs {b} labels")]
    LengthMismatch { a: usize, b: usize },
    #[error("non-positive value at ({row}, {col}) cannot be mapped to log space")]
    NonPositiveDepth { row: usize, col: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which space the depth grids given to [`combined_loss`] live in. `Log`
/// takes the elementwise log of prediction, ground truth and the Laplacian
/// mean first; gamma already parameterizes the scale of the active space and
/// passes through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpace {
    Linear,
    Log,
}

/// Per-pixel Laplacian distribution: location `mean` and scale
/// `b = exp(max(gamma, gamma_min))`. The floor keeps the NLL from collapsing
/// as residuals shrink during training.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianParams {
    pub mean: Grid,
    pub gamma: Grid,
    pub gamma_min: f64,
}

impl LaplacianParams {
    pub fn new(mean: Grid, gamma: Grid) -> Result<Self, LossError> {
        check_same_shape(&mean, &gamma)?;
        Ok(LaplacianParams {
            mean,
            gamma,
            gamma_min: GAMMA_MIN_DEFAULT,
        })
    }

    pub fn with_gamma_min(mut self, gamma_min: f64) -> Self {
        self.gamma_min = gamma_min;
        self
    }

    /// Scale at one pixel after the gamma floor.
    #[inline]
    pub fn scale(&self, row: usize, col: usize) -> f64 {
        self.gamma.get(row, col).max(self.gamma_min).exp()
    }
}

pub struct LaplacianNll {
    pub value: f64,
    pub grad_mean: Grid,
    pub grad_gamma: Grid,
}

fn check_same_shape(a: &Grid, b: &Grid) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::ShapeMismatch {
            expected_height: a.height(),
            expected_width: a.width(),
            got_height: b.height(),
            got_width: b.width(),
        });
    }
    Ok(())
}

fn check_mask(grid: &Grid, mask: &[bool]) -> Result<usize, LossError> {
    if mask.len() != grid.len() {
        return Err(LossError::MaskLength {
            expected: grid.len(),
            got: mask.len(),
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    Ok(count)
}

/// Mean absolute error over masked pixels, with its gradient in the
/// prediction. The gradient at a zero residual uses the subgradient 0.
pub fn l1_loss(pred: &Grid, gt: &Grid, mask: &[bool]) -> Result<(f64, Grid), LossError> {
    check_same_shape(pred, gt)?;
    let count = check_mask(pred, mask)? as f64;
    let mut value = 0.0;
    let mut grad = Grid::zeros(pred.height(), pred.width());
    let g = grad.as_mut_slice();
    for (idx, ((&p, &t), &m)) in pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(mask)
        .enumerate()
    {
        if m {
            let r = p - t;
            value += r.abs();
            g[idx] = signum_subgradient(r) / count;
        }
    }
    Ok((value / count, grad))
}

/// Negative log-likelihood of the ground truth under per-pixel Laplacian
/// distributions, averaged over masked pixels:
/// `mean(log(2 b) + |gt - mean| / b)`. Returns gradients in both the
/// location and the (pre-floor) log-scale gamma; pixels sitting on the gamma
/// floor get zero gamma-gradient.
pub fn laplacian_nll(
    params: &LaplacianParams,
    gt: &Grid,
    mask: &[bool],
) -> Result<LaplacianNll, LossError> {
    check_same_shape(&params.mean, gt)?;
    let count = check_mask(gt, mask)? as f64;
    let (h, w) = gt.shape();
    let mut value = 0.0;
    let mut grad_mean = Grid::zeros(h, w);
    let mut grad_gamma = Grid::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            if !mask[r * w + c] {
                continue;
            }
            let gamma = params.gamma.get(r, c);
            let clamped = gamma.max(params.gamma_min);
            let b = clamped.exp();
            let residual = gt.get(r, c) - params.mean.get(r, c);
            value += (2.0 * b).ln() + residual.abs() / b;
            grad_mean.set(r, c, -signum_subgradient(residual) / (b * count));
            if gamma > params.gamma_min {
                grad_gamma.set(r, c, (1.0 - residual.abs() / b) / count);
            }
        }
    }
    Ok(LaplacianNll {
        value: value / count,
        grad_mean,
        grad_gamma,
    })
}

/// Multi-scale L1 penalty on the gradients of the residual `pred - gt`:
/// the residual is average-pooled by 1, 2, 4, 8 and the absolute forward
/// differences are summed over all four scales, normalized once by the
/// full-resolution pixel count. Invariant to adding a constant to the
/// prediction.
pub fn gradient_matching_loss(pred: &Grid, gt: &Grid) -> Result<(f64, Grid), LossError> {
    check_same_shape(pred, gt)?;
    let (h, w) = pred.shape();
    let max_factor = 1usize << (GRADIENT_MATCHING_SCALES - 1);
    if h % max_factor != 0 || w % max_factor != 0 {
        return Err(LossError::DimensionNotDivisible {
            height: h,
            width: w,
            factor: max_factor,
        });
    }
    let residual = Grid::from_fn(h, w, |r, c| pred.get(r, c) - gt.get(r, c));
    let norm = 1.0 / (h * w) as f64;
    let mut value = 0.0;
    let mut grad = Grid::zeros(h, w);
    for k in 0..GRADIENT_MATCHING_SCALES {
        let factor = 1usize << k;
        let pooled = ops::avg_pool(&residual, factor)?;
        let (gx, gy) = ops::finite_diff(&pooled);
        let (hk, wk) = pooled.shape();
        let mut sign_x = Grid::zeros(hk, wk);
        let mut sign_y = Grid::zeros(hk, wk);
        for r in 0..hk {
            for c in 1..wk {
                value += gx.get(r, c).abs();
                sign_x.set(r, c, signum_subgradient(gx.get(r, c)));
            }
        }
        for r in 1..hk {
            for c in 0..wk {
                value += gy.get(r, c).abs();
                sign_y.set(r, c, signum_subgradient(gy.get(r, c)));
            }
        }
        let adj = ops::diff_adjoint(&sign_x, &sign_y)?;
        let spread = ops::pool_adjoint(&adj, factor);
        for (g, s) in grad.as_mut_slice().iter_mut().zip(spread.as_slice()) {
            *g += s;
        }
    }
    for g in grad.as_mut_slice() {
        *g *= norm;
    }
    Ok((value * norm, grad))
}

/// Fixed-weight training objective:
/// `L1 + 0.5 * LaplacianNLL + 2.0 * gradient matching`. The mask applies to
/// the two pointwise terms; gradient matching is dense by construction.
pub fn combined_loss(
    pred: &Grid,
    params: &LaplacianParams,
    gt: &Grid,
    mask: &[bool],
    space: LossSpace,
) -> Result<f64, LossError> {
    let (pred, gt, params) = match space {
        LossSpace::Linear => (pred.clone(), gt.clone(), params.clone()),
        LossSpace::Log => {
            let params = LaplacianParams {
                mean: log_grid(&params.mean)?,
                gamma: params.gamma.clone(),
                gamma_min: params.gamma_min,
            };
            (log_grid(pred)?, log_grid(gt)?, params)
        }
    };
    let (l1, _) = l1_loss(&pred, &gt, mask)?;
    let nll = laplacian_nll(&params, &gt, mask)?;
    let (gm, _) = gradient_matching_loss(&pred, &gt)?;
    Ok(L1_WEIGHT * l1 + LAPLACIAN_WEIGHT * nll.value + GRADIENT_MATCHING_WEIGHT * gm)
}

/// Binary cross-entropy for predicted observation confidences, where label
/// 0 marks a recorded outlier and 1 an inlier. Confidences must lie strictly
/// inside (0, 1).
pub fn bce_confidence(pred_confidence: &[f64], is_outlier: &[bool]) -> Result<f64, LossError> {
    if pred_confidence.len() != is_outlier.len() {
        return Err(LossError::LengthMismatch {
            a: pred_confidence.len(),
            b: is_outlier.len(),
        });
    }
    if pred_confidence.is_empty() {
        return Err(LossError::EmptyMask);
    }
    let mut total = 0.0;
    for (index, (&c, &outlier)) in pred_confidence.iter().zip(is_outlier).enumerate() {
        if !(c > 0.0 && c < 1.0) {
            return Err(LossError::ConfidenceOutOfRange { index, value: c });
        }
        total -= if outlier { (1.0 - c).ln() } else { c.ln() };
    }
    Ok(total / pred_confidence.len() as f64)
}

fn log_grid(g: &Grid) -> Result<Grid, LossError> {
    let w = g.width();
    for (idx, &v) in g.as_slice().iter().enumerate() {
        if v <= 0.0 {
            return Err(LossError::NonPositiveDepth {
                row: idx / w,
                col: idx % w,
            });
        }
    }
    Ok(g.map(f64::ln))
}

#[inline]
fn signum_subgradient(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Residuals bounded away from zero so |.| is differentiable at the
    /// probe points and finite differences are meaningful.
    fn safe_residual_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (Grid, Grid) {
        let gt = Grid::from_fn(h, w, |_, _| rng.random_range(1.0..3.0));
        let pred = Grid::from_fn(h, w, |r, c| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            gt.get(r, c) + sign * rng.random_range(0.05..0.45)
        });
        (pred, gt)
    }

    fn fd_check(
        value_at: impl Fn(&Grid) -> f64,
        base: &Grid,
        grad: &Grid,
        step: f64,
        rel_tol: f64,
    ) {
        let (h, w) = base.shape();
        for r in (0..h).step_by(3) {
            for c in (0..w).step_by(3) {
                let mut plus = base.clone();
                plus.set(r, c, base.get(r, c) + step);
                let mut minus = base.clone();
                minus.set(r, c, base.get(r, c) - step);
                let fd = (value_at(&plus) - value_at(&minus)) / (2.0 * step);
                let an = grad.get(r, c);
                let denom = fd.abs().max(an.abs()).max(1e-12);
                assert!(
                    (fd - an).abs() / denom <= rel_tol,
                    "({r},{c}): fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn l1_example() {
        let pred = Grid::from_vec(1, 3, vec![2.0, 1.0, 6.0]).unwrap();
        let gt = Grid::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let (v, grad) = l1_loss(&pred, &gt, &[true, true, true]).unwrap();
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(grad.as_slice(), &[1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn l1_empty_mask() {
        let g = Grid::zeros(2, 2);
        assert_eq!(
            l1_loss(&g, &g, &[false; 4]).unwrap_err(),
            LossError::EmptyMask
        );
    }

    #[test]
    fn laplacian_at_ground_truth_with_unit_scale_argument() {
        // mean == gt and b = 0.5 (gamma = ln 0.5): value = ln(2 * 0.5) = 0.
        let gt = Grid::constant(2, 2, 5.0);
        let params =
            LaplacianParams::new(gt.clone(), Grid::constant(2, 2, 0.5f64.ln())).unwrap();
        let out = laplacian_nll(&params, &gt, &[true; 4]).unwrap();
        assert!(out.value.abs() < 1e-15);
    }

    #[test]
    fn laplacian_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (mean, gt) = safe_residual_pair(&mut rng, 8, 8);
        let gamma = Grid::from_fn(8, 8, |_, _| rng.random_range(-1.2..0.5));
        let mask = vec![true; 64];
        let params = LaplacianParams::new(mean.clone(), gamma.clone()).unwrap();
        let out = laplacian_nll(&params, &gt, &mask).unwrap();

        fd_check(
            |m| {
                let p = LaplacianParams::new(m.clone(), gamma.clone()).unwrap();
                laplacian_nll(&p, &gt, &mask).unwrap().value
            },
            &mean,
            &out.grad_mean,
            1e-5,
            1e-4,
        );
        fd_check(
            |g| {
                let p = LaplacianParams::new(mean.clone(), g.clone()).unwrap();
                laplacian_nll(&p, &gt, &mask).unwrap().value
            },
            &gamma,
            &out.grad_gamma,
            1e-5,
            1e-4,
        );
    }

    #[test]
    fn optimal_scale_is_absolute_residual() {
        // For a single pixel, NLL(b) = ln(2b) + |r|/b is minimized at
        // b = |r|; confirm by line search at 1e-6 resolution.
        let r: f64 = 0.7312;
        let nll = |b: f64| (2.0 * b).ln() + r / b;
        let mut best_b = 0.0;
        let mut best = f64::INFINITY;
        let mut b = 0.5;
        while b <= 1.0 {
            let v = nll(b);
            if v < best {
                best = v;
                best_b = b;
            }
            b += 1e-6;
        }
        assert!((best_b - r).abs() <= 2e-6, "argmin {best_b} vs |r| {r}");
    }

    #[test]
    fn gradient_matching_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (pred, gt) = safe_residual_pair(&mut rng, 8, 8);
        let (_, grad) = gradient_matching_loss(&pred, &gt).unwrap();
        fd_check(
            |p| gradient_matching_loss(p, &gt).unwrap().0,
            &pred,
            &grad,
            1e-5,
            1e-4,
        );
    }

    #[test]
    fn gradient_matching_ignores_constant_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (pred, gt) = safe_residual_pair(&mut rng, 16, 16);
        let (base, _) = gradient_matching_loss(&pred, &gt).unwrap();
        let shifted = pred.map(|v| v + 11.75);
        let (moved, _) = gradient_matching_loss(&shifted, &gt).unwrap();
        assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn gradient_matching_needs_divisible_dims() {
        let g = Grid::zeros(12, 16);
        assert_eq!(
            gradient_matching_loss(&g, &g).unwrap_err(),
            LossError::DimensionNotDivisible {
                height: 12,
                width: 16,
                factor: 8
            }
        );
    }

    #[test]
    fn combined_is_the_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let (pred, gt) = safe_residual_pair(&mut rng, 8, 8);
        let gamma = Grid::from_fn(8, 8, |_, _| rng.random_range(-1.0..0.5));
        let mask: Vec<bool> = (0..64).map(|i| i % 3 != 0).collect();
        let params = LaplacianParams::new(pred.clone(), gamma).unwrap();

        let combined = combined_loss(&pred, &params, &gt, &mask, LossSpace::Linear).unwrap();
        let (l1, _) = l1_loss(&pred, &gt, &mask).unwrap();
        let nll = laplacian_nll(&params, &gt, &mask).unwrap();
        let (gm, _) = gradient_matching_loss(&pred, &gt).unwrap();
        let recomposed = L1_WEIGHT * l1 + LAPLACIAN_WEIGHT * nll.value + GRADIENT_MATCHING_WEIGHT * gm;
        assert!((combined - recomposed).abs() <= 1e-12);
    }

    #[test]
    fn combined_log_space_equals_linear_on_log_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let (pred, gt) = safe_residual_pair(&mut rng, 8, 8);
        let gamma = Grid::constant(8, 8, -0.3);
        let mask = vec![true; 64];
        let params_linear =
            LaplacianParams::new(pred.map(f64::ln), gamma.clone()).unwrap();
        let direct = combined_loss(
            &pred.map(f64::ln),
            &params_linear,
            &gt.map(f64::ln),
            &mask,
            LossSpace::Linear,
        )
        .unwrap();
        let params = LaplacianParams::new(pred.clone(), gamma).unwrap();
        let via_flag = combined_loss(&pred, &params, &gt, &mask, LossSpace::Log).unwrap();
        assert!((direct - via_flag).abs() <= 1e-12);
    }

    #[test]
    fn bce_example_and_bounds() {
        let v = bce_confidence(&[0.9, 0.2], &[false, true]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((v - expected).abs() < 1e-12);

        assert_eq!(
            bce_confidence(&[1.0], &[false]).unwrap_err(),
            LossError::ConfidenceOutOfRange {
                index: 0,
                value: 1.0
            }
        );
        assert_eq!(bce_confidence(&[], &[]).unwrap_err(), LossError::EmptyMask);
    }
}
