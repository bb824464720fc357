//! Direct dense solver used as an independent cross-check of the iterative
//! path.
//!
//! The normal matrix is assembled entry by entry from first principles: each
//! pooled finite-difference constraint is a row with `+1/f^2` over one
//! `f x f` block of fine pixels and `-1/f^2` over the neighbouring block,
//! and rows are accumulated as outer products. Nothing here touches the
//! matrix-free operator, so agreement between the two routes is meaningful.

use super::{check_shapes, objective, observation_weights, IntegratorError, Solution, SolveReport, SolverConfig};
use crate::grid::{DepthGrid, DepthSpace, GradientPyramid, Grid, SparseObservation};
use nalgebra::{DMatrix, DVector};

/// Hard cap on H * W for the dense route; quadratic memory beyond this is
/// pointless for a cross-check.
pub const DENSE_ORACLE_MAX_PIXELS: usize = 4096;

/// Explicit normal matrix and right-hand side. Shared by the dense solver
/// and by tests that compare the matrix-free operator against real matrix
/// columns.
pub(crate) fn assemble_dense(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
) -> Result<(DMatrix<f64>, DVector<f64>), IntegratorError> {
    check_shapes(obs, pyramid, config)?;
    let (height, width) = obs.shape();
    let n = height * width;
    if n > DENSE_ORACLE_MAX_PIXELS {
        return Err(IntegratorError::GridTooLarge {
            pixels: n,
            limit: DENSE_ORACLE_MAX_PIXELS,
        });
    }
    let weights = observation_weights(obs, config.alpha)?;

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (idx, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            a[(idx, idx)] += w;
            b[idx] += w * obs.values()[idx].ln();
        }
    }

    // One constraint row: entries (pixel index, signed 1/f^2) over the two
    // blocks, with target g. Accumulate A += row^T row and b += row^T g.
    let mut row: Vec<(usize, f64)> = Vec::new();
    let accumulate = |row: &[(usize, f64)], target: f64, a: &mut DMatrix<f64>, b: &mut DVector<f64>| {
        for &(i, si) in row {
            for &(j, sj) in row {
                a[(i, j)] += si * sj;
            }
            b[i] += si * target;
        }
    };

    for (k, (gx, gy)) in pyramid.levels().enumerate() {
        let factor = 1usize << k;
        let (hk, wk) = (height / factor, width / factor);
        let s = 1.0 / (factor * factor) as f64;
        let push_block = |row: &mut Vec<(usize, f64)>, rc: usize, cc: usize, sign: f64| {
            for r in rc * factor..(rc + 1) * factor {
                for c in cc * factor..(cc + 1) * factor {
                    row.push((r * width + c, sign * s));
                }
            }
        };
        for r in 0..hk {
            for c in 1..wk {
                row.clear();
                push_block(&mut row, r, c, 1.0);
                push_block(&mut row, r, c - 1, -1.0);
                accumulate(&row, gx.get(r, c), &mut a, &mut b);
            }
        }
        for r in 1..hk {
            for c in 0..wk {
                row.clear();
                push_block(&mut row, r, c, 1.0);
                push_block(&mut row, r - 1, c, -1.0);
                accumulate(&row, gy.get(r, c), &mut a, &mut b);
            }
        }
    }
    Ok((a, b))
}

pub fn solve_dense_oracle(
    obs: &SparseObservation,
    pyramid: &GradientPyramid,
    config: &SolverConfig,
) -> Result<Solution, IntegratorError> {
    let (a, b) = assemble_dense(obs, pyramid, config)?;
    let (height, width) = obs.shape();
    let b_norm = b.norm();
    let chol = a
        .clone()
        .cholesky()
        .expect("normal matrix is SPD given a positive-confidence observation");
    let x = chol.solve(&b);
    let residual = if b_norm > 0.0 {
        (&a * &x - &b).norm() / b_norm
    } else {
        0.0
    };

    let depth = DepthGrid::from_dense(height, width, x.as_slice().to_vec(), DepthSpace::Log)?;
    let energy = objective(obs, pyramid, config.alpha, &Grid::from_vec(height, width, x.as_slice().to_vec()).expect("sized by construction"));
    Ok(Solution {
        depth,
        report: SolveReport {
            iterations: 0,
            final_rel_residual: residual,
            energy,
        },
    })
}
