//! Rotating-LiDAR observation patterns: elevation-band sampling and
//! line-count reduction by elevation clustering.

use crate::grid::{DepthGrid, SparseObservation};
use crate::patterns::{CameraIntrinsics, PatternError};
use crate::scalenorm;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MIN_LIDAR_LINES: usize = 4;
pub const MAX_LIDAR_LINES: usize = 128;

/// Vertical sensor-offset range, as a fraction of the median scene depth.
const CENTER_OFFSET_FRACTION: f64 = 0.02;

/// Sorted-gap ratios below this provide no evidence of separated bands;
/// the point set is treated as a single line.
const GAP_SEPARATION_RATIO: f64 = 3.0;

const KMEANS_MAX_ITERS: usize = 100;

/// Elevation of the ray through (`row`, `col`) at `depth`, measured about a
/// sensor origin displaced vertically by `origin_y`. Positive y points down
/// in image coordinates, so elevation increases toward the image top.
fn elevation(intrinsics: &CameraIntrinsics, row: usize, col: usize, depth: f64, origin_y: f64) -> f64 {
    let x = (col as f64 - intrinsics.cx) / intrinsics.fx * depth;
    let y = (row as f64 - intrinsics.cy) / intrinsics.fy * depth;
    (-(y - origin_y)).atan2((x * x + depth * depth).sqrt())
}

/// Samples pixels lying on the beams of a virtual rotating LiDAR.
///
/// Beam elevations are `num_lines` equally spaced angles spanning the
/// scene's elevation range, measured about a sensor origin with a random
/// vertical offset (within ±2% of median depth) and perturbed by a random
/// angular shift of up to half the beam spacing. In each column every beam
/// claims the one pixel whose elevation is nearest, provided it lies within
/// half a beam width (the local row-to-row elevation gap). One pixel per
/// beam keeps scan lines a single pixel thick, and `num_lines` equal to
/// the image height selects nearly every pixel.
pub fn sample_lidar(
    gt: &DepthGrid,
    intrinsics: &CameraIntrinsics,
    num_lines: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SparseObservation, PatternError> {
    if !(MIN_LIDAR_LINES..=MAX_LIDAR_LINES).contains(&num_lines) {
        return Err(PatternError::InvalidLineCount(num_lines));
    }
    intrinsics.validate_for(gt.height(), gt.width())?;
    let mut depths: Vec<f64> = gt.valid_values().collect();
    let median = scalenorm::median(&mut depths).ok_or(PatternError::NotEnoughValidPixels {
        needed: 1,
        available: 0,
    })?;
    let offset_range = CENTER_OFFSET_FRACTION * median;
    let origin_y = rng.random_range(-offset_range..=offset_range);

    let (theta_min, theta_max) = elevation_range(gt, intrinsics, origin_y)?;
    let spacing = (theta_max - theta_min) / (num_lines - 1) as f64;
    let shift = rng.random_range(-0.5 * spacing..=0.5 * spacing);
    sample_lidar_with_params(gt, intrinsics, num_lines, origin_y, shift)
}

fn elevation_range(
    gt: &DepthGrid,
    intrinsics: &CameraIntrinsics,
    origin_y: f64,
) -> Result<(f64, f64), PatternError> {
    let mut theta_min = f64::INFINITY;
    let mut theta_max = f64::NEG_INFINITY;
    for row in 0..gt.height() {
        for col in 0..gt.width() {
            if let Some(depth) = gt.get(row, col) {
                let theta = elevation(intrinsics, row, col, depth, origin_y);
                theta_min = theta_min.min(theta);
                theta_max = theta_max.max(theta);
            }
        }
    }
    if !(theta_max > theta_min) {
        return Err(PatternError::NoPointsGenerated);
    }
    Ok((theta_min, theta_max))
}

pub(crate) fn sample_lidar_with_params(
    gt: &DepthGrid,
    intrinsics: &CameraIntrinsics,
    num_lines: usize,
    origin_y: f64,
    shift: f64,
) -> Result<SparseObservation, PatternError> {
    let (height, width) = gt.shape();
    let (theta_min, theta_max) = elevation_range(gt, intrinsics, origin_y)?;
    let spacing = (theta_max - theta_min) / (num_lines - 1) as f64;
    let theta0 = theta_min + shift;

    let mut mask = vec![false; height * width];
    let mut values = vec![0.0; height * width];
    for col in 0..width {
        let angles: Vec<Option<f64>> = (0..height)
            .map(|row| {
                gt.get(row, col)
                    .map(|depth| elevation(intrinsics, row, col, depth, origin_y))
            })
            .collect();
        // Beam width at a row: the larger of its two vertical neighbor
        // gaps. Rows with no valid vertical neighbor have no estimate.
        let beam = |row: usize| -> Option<f64> {
            let theta = angles[row]?;
            let up = row.checked_sub(1).and_then(|r| angles[r]);
            let down = if row + 1 < height { angles[row + 1] } else { None };
            match (up, down) {
                (Some(a), Some(b)) => Some((theta - a).abs().max((b - theta).abs())),
                (Some(a), None) => Some((theta - a).abs()),
                (None, Some(b)) => Some((b - theta).abs()),
                (None, None) => None,
            }
        };
        for line in 0..num_lines {
            let target = theta0 + line as f64 * spacing;
            let mut best: Option<(usize, f64)> = None;
            for (row, angle) in angles.iter().enumerate() {
                if let Some(theta) = angle {
                    let dist = (theta - target).abs();
                    if best.is_none_or(|(_, d)| dist < d) {
                        best = Some((row, dist));
                    }
                }
            }
            let Some((row, dist)) = best else {
                continue;
            };
            if beam(row).is_some_and(|b| dist <= 0.5 * b) {
                let idx = row * width + col;
                mask[idx] = true;
                values[idx] = gt.get(row, col).expect("nearest row is valid");
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(PatternError::NoPointsGenerated);
    }
    Ok(SparseObservation::new(height, width, values, mask)?)
}

/// Reduces a LiDAR observation to fewer lines by clustering point
/// elevations and keeping a uniform stride of clusters.
///
/// The source line count is estimated from the sorted elevation gaps, the
/// points are clustered by 1D k-means (quantile-initialized) with that many
/// clusters, and every `floor(k / target_lines)`-th cluster in ascending
/// elevation is kept. A target at or above the estimated count returns the
/// observation unchanged.
pub fn subsample_lines(
    lidar_obs: &SparseObservation,
    intrinsics: &CameraIntrinsics,
    target_lines: usize,
) -> Result<SparseObservation, PatternError> {
    if lidar_obs.count() == 0 {
        return Err(PatternError::ClusteringFailed("observation has no points"));
    }
    if target_lines == 0 {
        return Err(PatternError::ClusteringFailed("target line count is zero"));
    }
    intrinsics.validate_for(lidar_obs.height(), lidar_obs.width())?;
    // Subsampling does not know the original sensor offset; elevations
    // about the camera origin preserve the band structure.
    let points: Vec<(usize, usize, f64)> = lidar_obs
        .iter_valid()
        .map(|(row, col, value, _)| (row, col, elevation(intrinsics, row, col, value, 0.0)))
        .collect();
    let mut sorted: Vec<f64> = points.iter().map(|&(_, _, theta)| theta).collect();
    sorted.sort_by(f64::total_cmp);

    let k = estimate_line_count(&sorted);
    if target_lines >= k {
        return Ok(lidar_obs.clone());
    }
    let centers = kmeans_1d(&sorted, k)?;
    let stride = k / target_lines;

    let (height, width) = lidar_obs.shape();
    let mut mask = vec![false; height * width];
    let mut values = vec![0.0; height * width];
    let mut confidence = vec![0.0; height * width];
    let mut kept_any = false;
    for &(row, col, theta) in &points {
        let cluster = nearest_center(&centers, theta);
        if cluster % stride != 0 {
            continue;
        }
        let idx = row * width + col;
        mask[idx] = true;
        values[idx] = lidar_obs.values()[idx];
        confidence[idx] = lidar_obs.confidence()[idx];
        kept_any = true;
    }
    if !kept_any {
        return Err(PatternError::ClusteringFailed("no cluster survived the stride"));
    }
    Ok(SparseObservation::with_confidence(height, width, values, mask, confidence)?)
}

/// Number of elevation bands suggested by the sorted angles: `m` dominant
/// gaps separate `m + 1` bands. Scanning the descending gap sequence, the
/// first drop of [`GAP_SEPARATION_RATIO`] marks where inter-band gaps end;
/// taking the first drop (not the largest) keeps near-zero gaps deep inside
/// a band from masquerading as the boundary.
fn estimate_line_count(sorted: &[f64]) -> usize {
    if sorted.len() < 2 {
        return 1;
    }
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    if gaps[0] <= 0.0 {
        return 1;
    }
    let limit = gaps.len().min(2 * MAX_LIDAR_LINES);
    for j in 0..limit - 1 {
        if gaps[j] <= 0.0 {
            break;
        }
        let ratio = if gaps[j + 1] > 0.0 {
            gaps[j] / gaps[j + 1]
        } else {
            f64::INFINITY
        };
        if ratio >= GAP_SEPARATION_RATIO {
            return j + 2;
        }
    }
    1
}

/// Lloyd's algorithm on sorted 1D data with quantile initialization.
/// Returns cluster centers in ascending order.
fn kmeans_1d(sorted: &[f64], k: usize) -> Result<Vec<f64>, PatternError> {
    let n = sorted.len();
    if k > n {
        return Err(PatternError::ClusteringFailed("more clusters than points"));
    }
    let mut centers: Vec<f64> = (0..k)
        .map(|i| {
            let rank = (i as f64 + 0.5) / k as f64 * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = rank.ceil() as usize;
            let frac = rank - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        })
        .collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for &v in sorted {
            let c = nearest_center(&centers, v);
            sums[c] += v;
            counts[c] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(PatternError::ClusteringFailed("a cluster received no points"));
        }
        let next: Vec<f64> = sums.iter().zip(&counts).map(|(&s, &c)| s / c as f64).collect();
        let moved = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centers = next;
        if moved < 1e-15 {
            break;
        }
    }
    centers.sort_by(f64::total_cmp);
    Ok(centers)
}

fn nearest_center(centers: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = (value - c).abs();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}
