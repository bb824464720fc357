//! Corner detection for feature-style sparse depth patterns.
//!
//! Sparse depth from structure-from-motion pipelines lands on textured,
//! corner-like pixels. A multi-scale Harris detector with greedy
//! non-maximum suppression reproduces that spatial distribution without
//! the machinery of a full descriptor-based detector.

use crate::grid::Grid;

/// Images smaller than this on either side have too little context for
/// corner detection; [`detect_keypoints`] returns no points for them.
pub const MIN_KEYPOINT_IMAGE_SIDE: usize = 16;

/// Suppression radius in pixels (Euclidean): no two returned keypoints are
/// within this distance of each other.
pub const NMS_RADIUS: f64 = 4.0;

const HARRIS_K: f64 = 0.04;
/// Derivative scales (two octaves). Coarser scales respond to whole
/// compact shapes rather than their corners.
const SCALES: [f64; 2] = [1.0, 2.0];
/// Responses below this fraction of the strongest response are flat areas,
/// not corners.
const RELATIVE_RESPONSE_FLOOR: f64 = 0.01;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

/// Separable Gaussian blur with replicated borders.
fn blur(grid: &Grid, sigma: f64) -> Grid {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (height, width) = grid.shape();
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let horizontal = Grid::from_fn(height, width, |row, col| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, &w)| w * grid.get(row, clamp(col as i64 + i as i64 - radius, width)))
            .sum()
    });
    Grid::from_fn(height, width, |row, col| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, &w)| w * horizontal.get(clamp(row as i64 + i as i64 - radius, height), col))
            .sum()
    })
}

/// Central differences in the interior, one-sided at the borders.
fn gradients(grid: &Grid) -> (Grid, Grid) {
    let (height, width) = grid.shape();
    let gx = Grid::from_fn(height, width, |row, col| {
        let left = col.saturating_sub(1);
        let right = (col + 1).min(width - 1);
        (grid.get(row, right) - grid.get(row, left)) / (right - left).max(1) as f64
    });
    let gy = Grid::from_fn(height, width, |row, col| {
        let up = row.saturating_sub(1);
        let down = (row + 1).min(height - 1);
        (grid.get(down, col) - grid.get(up, col)) / (down - up).max(1) as f64
    });
    (gx, gy)
}

/// Scale-normalized Harris response at one derivative scale.
fn harris_response(image: &Grid, sigma: f64) -> Grid {
    let smoothed = blur(image, sigma);
    let (ix, iy) = gradients(&smoothed);
    let ixx = blur(&Grid::from_fn(image.height(), image.width(), |r, c| ix.get(r, c) * ix.get(r, c)), 1.5 * sigma);
    let iyy = blur(&Grid::from_fn(image.height(), image.width(), |r, c| iy.get(r, c) * iy.get(r, c)), 1.5 * sigma);
    let ixy = blur(&Grid::from_fn(image.height(), image.width(), |r, c| ix.get(r, c) * iy.get(r, c)), 1.5 * sigma);
    // Gradients of a unit step scale as 1/sigma, so det scales as 1/sigma^4;
    // multiplying by sigma^4 makes responses comparable across scales.
    let norm = sigma.powi(4);
    Grid::from_fn(image.height(), image.width(), |r, c| {
        let (a, b, d) = (ixx.get(r, c), ixy.get(r, c), iyy.get(r, c));
        let det = a * d - b * b;
        let trace = a + d;
        norm * (det - HARRIS_K * trace * trace)
    })
}

pub(crate) fn detect_with_responses(image: &Grid, max_points: usize) -> Vec<(f64, usize, usize)> {
    if image.height() < MIN_KEYPOINT_IMAGE_SIDE
        || image.width() < MIN_KEYPOINT_IMAGE_SIDE
        || max_points == 0
    {
        return Vec::new();
    }
    let mut response = harris_response(image, SCALES[0]);
    for &sigma in &SCALES[1..] {
        let layer = harris_response(image, sigma);
        for (best, &candidate) in response.as_mut_slice().iter_mut().zip(layer.as_slice()) {
            if candidate > *best {
                *best = candidate;
            }
        }
    }
    let peak = response.as_slice().iter().copied().fold(f64::MIN, f64::max);
    if !(peak > 0.0) {
        return Vec::new();
    }
    let floor = RELATIVE_RESPONSE_FLOOR * peak;
    let width = image.width();
    let mut candidates: Vec<(f64, usize, usize)> = response
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > floor)
        .map(|(idx, &r)| (r, idx / width, idx % width))
        .collect();
    // Response descending, position as a deterministic tiebreak.
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let radius_sq = NMS_RADIUS * NMS_RADIUS;
    let mut kept: Vec<(f64, usize, usize)> = Vec::new();
    for (r, row, col) in candidates {
        let suppressed = kept.iter().any(|&(_, kr, kc)| {
            let dr = kr as f64 - row as f64;
            let dc = kc as f64 - col as f64;
            dr * dr + dc * dc <= radius_sq
        });
        if !suppressed {
            kept.push((r, row, col));
            if kept.len() == max_points {
                break;
            }
        }
    }
    kept
}

/// Detects up to `max_points` corner locations, strongest first.
///
/// Keypoints are local maxima of the multi-scale Harris response with
/// greedy suppression inside [`NMS_RADIUS`]. Images smaller than
/// [`MIN_KEYPOINT_IMAGE_SIDE`] or without any positive response (constant
/// images) yield an empty list.
pub fn detect_keypoints(image: &Grid, max_points: usize) -> Vec<(usize, usize)> {
    detect_with_responses(image, max_points)
        .into_iter()
        .map(|(_, row, col)| (row, col))
        .collect()
}
