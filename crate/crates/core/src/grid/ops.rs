//! Finite differences, average pooling, and their exact adjoints.
//!
//! Forward maps zero-fill the entries they do not define (gx column 0, gy
//! row 0); the adjoints treat those entries as zero no matter what is stored
//! there, so `<A x, y> == <x, A^T y>` holds to rounding error for arbitrary
//! inputs.

use super::{Grid, GridError};

/// Forward differences: `gx[r][c] = g[r][c] - g[r][c-1]` (horizontal, zero at
/// column 0) and `gy[r][c] = g[r][c] - g[r-1][c]` (vertical, zero at row 0).
pub fn finite_diff(g: &Grid) -> (Grid, Grid) {
    let (h, w) = g.shape();
    let mut gx = Grid::zeros(h, w);
    let mut gy = Grid::zeros(h, w);
    let src = g.as_slice();
    {
        let out = gx.as_mut_slice();
        for r in 0..h {
            let row = r * w;
            for c in 1..w {
                out[row + c] = src[row + c] - src[row + c - 1];
            }
        }
    }
    {
        let out = gy.as_mut_slice();
        for r in 1..h {
            let row = r * w;
            for c in 0..w {
                out[row + c] = src[row + c] - src[row - w + c];
            }
        }
    }
    (gx, gy)
}

/// Adjoint of [`finite_diff`]: scatters each difference back onto its two
/// pixels with opposite signs. Entries at gx column 0 and gy row 0 are
/// ignored.
pub fn diff_adjoint(gx: &Grid, gy: &Grid) -> Result<Grid, GridError> {
    if gx.shape() != gy.shape() {
        return Err(GridError::ShapeMismatch {
            expected_height: gx.height(),
            expected_width: gx.width(),
            got_height: gy.height(),
            got_width: gy.width(),
        });
    }
    let (h, w) = gx.shape();
    let mut out = Grid::zeros(h, w);
    let o = out.as_mut_slice();
    let sx = gx.as_slice();
    let sy = gy.as_slice();
    for r in 0..h {
        let row = r * w;
        for c in 1..w {
            let v = sx[row + c];
            o[row + c] += v;
            o[row + c - 1] -= v;
        }
    }
    for r in 1..h {
        let row = r * w;
        for c in 0..w {
            let v = sy[row + c];
            o[row + c] += v;
            o[row - w + c] -= v;
        }
    }
    Ok(out)
}

/// Block average over `factor x factor` tiles. `factor` must be a power of
/// two and divide both dimensions.
pub fn avg_pool(g: &Grid, factor: usize) -> Result<Grid, GridError> {
    assert!(
        factor >= 1 && factor.is_power_of_two(),
        "pooling factor must be a power of two, got {factor}"
    );
    if factor == 1 {
        return Ok(g.clone());
    }
    let (h, w) = g.shape();
    if h % factor != 0 || w % factor != 0 {
        return Err(GridError::DimensionNotDivisible {
            height: h,
            width: w,
            factor,
        });
    }
    let (hc, wc) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let src = g.as_slice();
    let mut out = Grid::zeros(hc, wc);
    let o = out.as_mut_slice();
    for r in 0..h {
        let coarse_row = (r / factor) * wc;
        let row = r * w;
        for c in 0..w {
            o[coarse_row + c / factor] += src[row + c];
        }
    }
    for v in o.iter_mut() {
        *v *= inv;
    }
    Ok(out)
}

/// Adjoint of [`avg_pool`]: spreads each coarse value uniformly over its
/// `factor x factor` block, scaled by `1/factor^2`.
pub fn pool_adjoint(coarse: &Grid, factor: usize) -> Grid {
    assert!(
        factor >= 1 && factor.is_power_of_two(),
        "pooling factor must be a power of two, got {factor}"
    );
    if factor == 1 {
        return coarse.clone();
    }
    let (hc, wc) = coarse.shape();
    let (h, w) = (hc * factor, wc * factor);
    let inv = 1.0 / (factor * factor) as f64;
    let src = coarse.as_slice();
    let mut out = Grid::zeros(h, w);
    let o = out.as_mut_slice();
    for r in 0..h {
        let coarse_row = (r / factor) * wc;
        let row = r * w;
        for c in 0..w {
            o[row + c] = src[coarse_row + c / factor] * inv;
        }
    }
    out
}
