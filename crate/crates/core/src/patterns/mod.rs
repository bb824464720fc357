//! Synthetic sparse-depth observation patterns.
//!
//! Dense ground truth plus a [`PatternSpec`] yields the kinds of sparse
//! input a depth completion system meets in practice: uniform random
//! samples, corner-concentrated feature points, and LiDAR scan lines, all
//! optionally degraded by range outliers and occlusion-boundary noise.
//! Generation is a pure function of the spec's seed: equal specs produce
//! bit-identical observations.

mod boundary;
mod harris;
mod lidar;

pub use boundary::{boundary_noise, default_baseline_magnitude};
pub use harris::{detect_keypoints, MIN_KEYPOINT_IMAGE_SIDE, NMS_RADIUS};
pub use lidar::{sample_lidar, subsample_lines, MAX_LIDAR_LINES, MIN_LIDAR_LINES};

use crate::grid::{DepthGrid, GridError, RgbImage, SparseObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The outlier model covers sensor glitches, not systematic failure; more
/// than a tenth of the points being wrong is outside its regime.
pub const MAX_OUTLIER_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("density {0} outside (0, 1]")]
    InvalidDensity(f64),
    #[error("keypoint count must be at least 1")]
    InvalidPointCount(usize),
    #[error("line count {0} outside [{MIN_LIDAR_LINES}, {MAX_LIDAR_LINES}]")]
    InvalidLineCount(usize),
    #[error("outlier fraction {0} outside [0, {MAX_OUTLIER_FRACTION}]")]
    InvalidOutlierFraction(f64),
    #[error("baseline magnitude must be nonnegative and finite, got {0}")]
    InvalidBaseline(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("pattern needs {needed} valid pixels but ground truth has {available}")]
    NotEnoughValidPixels { needed: usize, available: usize },
    #[error("no pixels fell on any beam")]
    NoPointsGenerated,
    #[error("elevation clustering failed: {0}")]
    ClusteringFailed(&'static str),
    #[error("projection produced an empty view")]
    ProjectionDegenerate,
    #[error("keypoint patterns require an intensity image")]
    MissingImage,
    #[error("pattern spec line {line}: {message}")]
    MalformedSpec { line: usize, message: String },
    #[error("pattern spec is missing required field `{0}`")]
    MissingSpecField(&'static str),
    #[error("unknown pattern spec field `{0}`")]
    UnknownSpecField(String),
    #[error("pattern spec field `{field}` does not apply to kind `{kind}`")]
    ForeignSpecField { field: String, kind: &'static str },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Pinhole camera model mapping pixels to rays. Pixel (row, col) maps to
/// the ray through ((col - cx)/fx, (row - cy)/fy, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, PatternError> {
        for (name, v) in [("fx", fx), ("fy", fy)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PatternError::InvalidIntrinsics(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [("cx", cx), ("cy", cy)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PatternError::InvalidIntrinsics(format!(
                    "{name} must be nonnegative and finite, got {v}"
                )));
            }
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// Generic intrinsics for a grid with no calibration: unit-ish focal
    /// length of `max(height, width)` pixels, principal point at the
    /// center.
    pub fn default_for(height: usize, width: usize) -> Self {
        CameraIntrinsics {
            fx: height.max(width) as f64,
            fy: height.max(width) as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// The principal point must fall inside the grid it is used with.
    pub fn validate_for(&self, height: usize, width: usize) -> Result<(), PatternError> {
        if self.cx >= width as f64 || self.cy >= height as f64 {
            return Err(PatternError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {height}x{width} grid",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    pub(crate) fn unproject(&self, row: usize, col: usize, depth: f64) -> [f64; 3] {
        [
            (col as f64 - self.cx) / self.fx * depth,
            (row as f64 - self.cy) / self.fy * depth,
            depth,
        ]
    }

    /// Projects a camera-frame point to the nearest pixel, if inside the
    /// grid. The caller guarantees `p[2] > 0`.
    pub(crate) fn project_to_pixel(
        &self,
        p: [f64; 3],
        height: usize,
        width: usize,
    ) -> Option<(usize, usize)> {
        let col = (self.fx * p[0] / p[2] + self.cx).round();
        let row = (self.fy * p[1] / p[2] + self.cy).round();
        if row < 0.0 || col < 0.0 || row >= height as f64 || col >= width as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }
}

/// Which sampler produces the observation, with its kind-specific knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternKind {
    Random { density: f64 },
    Keypoint { num_points: usize },
    Lidar { num_lines: usize },
}

impl PatternKind {
    fn name(&self) -> &'static str {
        match self {
            PatternKind::Random { .. } => "random",
            PatternKind::Keypoint { .. } => "keypoint",
            PatternKind::Lidar { .. } => "lidar",
        }
    }
}

/// Complete description of a synthetic observation pattern. Together with
/// the ground truth (and image, for keypoints) this determines the output
/// bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub outlier_fraction: f64,
    pub boundary_noise: bool,
    pub seed: u64,
}

impl PatternSpec {
    pub fn new(
        kind: PatternKind,
        outlier_fraction: f64,
        boundary_noise: bool,
        seed: u64,
    ) -> Result<Self, PatternError> {
        match kind {
            PatternKind::Random { density } => {
                if !(density > 0.0 && density <= 1.0) {
                    return Err(PatternError::InvalidDensity(density));
                }
            }
            PatternKind::Keypoint { num_points } => {
                if num_points == 0 {
                    return Err(PatternError::InvalidPointCount(num_points));
                }
            }
            PatternKind::Lidar { num_lines } => {
                if !(MIN_LIDAR_LINES..=MAX_LIDAR_LINES).contains(&num_lines) {
                    return Err(PatternError::InvalidLineCount(num_lines));
                }
            }
        }
        if !(0.0..=MAX_OUTLIER_FRACTION).contains(&outlier_fraction) {
            return Err(PatternError::InvalidOutlierFraction(outlier_fraction));
        }
        Ok(PatternSpec {
            kind,
            outlier_fraction,
            boundary_noise,
            seed,
        })
    }

    /// Flat `key = value` text, one field per line. The kind-specific field
    /// (`density`, `points`, or `lines`) appears exactly for the active
    /// kind.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("kind = {}\n", self.kind.name());
        match self.kind {
            PatternKind::Random { density } => out.push_str(&format!("density = {density}\n")),
            PatternKind::Keypoint { num_points } => out.push_str(&format!("points = {num_points}\n")),
            PatternKind::Lidar { num_lines } => out.push_str(&format!("lines = {num_lines}\n")),
        }
        out.push_str(&format!("outlier_fraction = {}\n", self.outlier_fraction));
        out.push_str(&format!("boundary_noise = {}\n", self.boundary_noise));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }

    /// Parses the [`Self::to_key_values`] format. Blank lines and `#`
    /// comments are ignored; `kind`, the matching kind field, and `seed`
    /// are required; `outlier_fraction` defaults to 0 and `boundary_noise`
    /// to false.
    pub fn from_key_values(text: &str) -> Result<Self, PatternError> {
        let mut fields: Vec<(usize, String, String)> = Vec::new();
        for (line_idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PatternError::MalformedSpec {
                    line: line_idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            if fields.iter().any(|(_, k, _)| *k == key) {
                return Err(PatternError::MalformedSpec {
                    line: line_idx + 1,
                    message: format!("duplicate field `{key}`"),
                });
            }
            fields.push((line_idx + 1, key, value.trim().to_string()));
        }
        let lookup = |name: &str| fields.iter().find(|(_, k, _)| k == name);
        let parse = |name: &'static str, line: usize, value: &str| -> Result<f64, PatternError> {
            value.parse::<f64>().map_err(|_| PatternError::MalformedSpec {
                line,
                message: format!("field `{name}` is not a number: `{value}`"),
            })
        };

        let (kind_line, _, kind_name) = lookup("kind").ok_or(PatternError::MissingSpecField("kind"))?;
        let kind_field = match kind_name.as_str() {
            "random" => "density",
            "keypoint" => "points",
            "lidar" => "lines",
            other => {
                return Err(PatternError::MalformedSpec {
                    line: *kind_line,
                    message: format!("unknown kind `{other}`"),
                })
            }
        };
        let known = ["kind", "density", "points", "lines", "outlier_fraction", "boundary_noise", "seed"];
        for (_, key, _) in &fields {
            if !known.contains(&key.as_str()) {
                return Err(PatternError::UnknownSpecField(key.clone()));
            }
            if ["density", "points", "lines"].contains(&key.as_str()) && key != kind_field {
                return Err(PatternError::ForeignSpecField {
                    field: key.clone(),
                    kind: match kind_name.as_str() {
                        "random" => "random",
                        "keypoint" => "keypoint",
                        _ => "lidar",
                    },
                });
            }
        }
        let (value_line, _, value) = lookup(kind_field).ok_or(PatternError::MissingSpecField(
            match kind_field {
                "density" => "density",
                "points" => "points",
                _ => "lines",
            },
        ))?;
        let kind = match kind_name.as_str() {
            "random" => PatternKind::Random {
                density: parse("density", *value_line, value)?,
            },
            "keypoint" => PatternKind::Keypoint {
                num_points: value.parse().map_err(|_| PatternError::MalformedSpec {
                    line: *value_line,
                    message: format!("field `points` is not a count: `{value}`"),
                })?,
            },
            _ => PatternKind::Lidar {
                num_lines: value.parse().map_err(|_| PatternError::MalformedSpec {
                    line: *value_line,
                    message: format!("field `lines` is not a count: `{value}`"),
                })?,
            },
        };
        let outlier_fraction = match lookup("outlier_fraction") {
            Some((line, _, v)) => parse("outlier_fraction", *line, v)?,
            None => 0.0,
        };
        let boundary_noise = match lookup("boundary_noise") {
            Some((line, _, v)) => v.parse::<bool>().map_err(|_| PatternError::MalformedSpec {
                line: *line,
                message: format!("field `boundary_noise` is not true/false: `{v}`"),
            })?,
            None => false,
        };
        let (seed_line, _, seed_text) = lookup("seed").ok_or(PatternError::MissingSpecField("seed"))?;
        let seed = seed_text.parse::<u64>().map_err(|_| PatternError::MalformedSpec {
            line: *seed_line,
            message: format!("field `seed` is not an integer: `{seed_text}`"),
        })?;
        PatternSpec::new(kind, outlier_fraction, boundary_noise, seed)
    }
}

/// Draws `amount` distinct entries of `candidates` uniformly. Zero draws
/// never touch the RNG, keeping streams identical across no-op calls.
fn draw_uniform_subset(
    candidates: &[usize],
    amount: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, PatternError> {
    if candidates.len() < amount {
        return Err(PatternError::NotEnoughValidPixels {
            needed: amount,
            available: candidates.len(),
        });
    }
    if amount == 0 {
        return Ok(Vec::new());
    }
    Ok(rand::seq::index::sample(rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

/// Number of points a fractional request stands for, rounded half to even
/// so counts are platform-independent.
fn rounded_count(fraction: f64, total: usize) -> usize {
    (fraction * total as f64).round_ties_even() as usize
}

/// Uniformly samples `round(density * height * width)` valid pixels of the
/// ground truth, without replacement, at confidence 1.
pub fn sample_random(
    gt: &DepthGrid,
    density: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SparseObservation, PatternError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(PatternError::InvalidDensity(density));
    }
    let (height, width) = gt.shape();
    let target = rounded_count(density, height * width);
    let candidates: Vec<usize> = gt
        .valid()
        .iter()
        .enumerate()
        .filter_map(|(idx, &v)| v.then_some(idx))
        .collect();
    let chosen = draw_uniform_subset(&candidates, target, rng)?;
    let mut mask = vec![false; height * width];
    let mut values = vec![0.0; height * width];
    for idx in chosen {
        mask[idx] = true;
        values[idx] = gt.values()[idx];
    }
    Ok(SparseObservation::new(height, width, values, mask)?)
}

/// Reads ground-truth depth at the strongest detected corners; when the
/// image yields fewer corners than requested (or corners fall on invalid
/// pixels), the remainder is drawn uniformly from the other valid pixels.
pub fn sample_keypoints(
    gt: &DepthGrid,
    image: &RgbImage,
    num_points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SparseObservation, PatternError> {
    if num_points == 0 {
        return Err(PatternError::InvalidPointCount(0));
    }
    let (height, width) = gt.shape();
    if image.height() != height || image.width() != width {
        return Err(PatternError::Grid(GridError::ShapeMismatch {
            expected_height: height,
            expected_width: width,
            got_height: image.height(),
            got_width: image.width(),
        }));
    }
    if gt.valid_count() < num_points {
        return Err(PatternError::NotEnoughValidPixels {
            needed: num_points,
            available: gt.valid_count(),
        });
    }
    let mut mask = vec![false; height * width];
    let mut taken = 0usize;
    for (row, col) in detect_keypoints(&image.luma(), num_points) {
        let idx = row * width + col;
        if gt.valid()[idx] && !mask[idx] {
            mask[idx] = true;
            taken += 1;
        }
    }
    if taken < num_points {
        let candidates: Vec<usize> = gt
            .valid()
            .iter()
            .enumerate()
            .filter_map(|(idx, &v)| (v && !mask[idx]).then_some(idx))
            .collect();
        for idx in draw_uniform_subset(&candidates, num_points - taken, rng)? {
            mask[idx] = true;
        }
    }
    let values: Vec<f64> = gt
        .values()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    Ok(SparseObservation::new(height, width, values, mask)?)
}

/// Linear interpolation between closest ranks; `sorted` must be ascending.
pub(crate) fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Replaces a rounded fraction of the observed values with draws uniform in
/// the 5th..95th percentile range of the ground truth's valid depths.
///
/// Confidences and unselected points are untouched. Returns the corrupted
/// observation and a full-grid mask of the corrupted pixels, used as labels
/// when supervising confidence prediction.
pub fn inject_outliers(
    obs: &SparseObservation,
    fraction: f64,
    gt: &DepthGrid,
    rng: &mut ChaCha8Rng,
) -> Result<(SparseObservation, Vec<bool>), PatternError> {
    if !(0.0..=MAX_OUTLIER_FRACTION).contains(&fraction) {
        return Err(PatternError::InvalidOutlierFraction(fraction));
    }
    if obs.shape() != gt.shape() {
        return Err(PatternError::Grid(GridError::ShapeMismatch {
            expected_height: gt.height(),
            expected_width: gt.width(),
            got_height: obs.height(),
            got_width: obs.width(),
        }));
    }
    let outlier_mask = vec![false; obs.height() * obs.width()];
    let num_outliers = rounded_count(fraction, obs.count());
    if num_outliers == 0 {
        return Ok((obs.clone(), outlier_mask));
    }
    let mut sorted: Vec<f64> = gt.valid_values().collect();
    if sorted.is_empty() {
        return Err(PatternError::NotEnoughValidPixels {
            needed: 1,
            available: 0,
        });
    }
    sorted.sort_by(f64::total_cmp);
    let low = percentile(&sorted, 5.0);
    let high = percentile(&sorted, 95.0);

    let observed: Vec<usize> = obs
        .mask()
        .iter()
        .enumerate()
        .filter_map(|(idx, &m)| m.then_some(idx))
        .collect();
    let mut values = obs.values().to_vec();
    let mut outlier_mask = outlier_mask;
    for idx in draw_uniform_subset(&observed, num_outliers, rng)? {
        values[idx] = rng.random_range(low..=high);
        outlier_mask[idx] = true;
    }
    let corrupted = SparseObservation::with_confidence(
        obs.height(),
        obs.width(),
        values,
        obs.mask().to_vec(),
        obs.confidence().to_vec(),
    )?;
    Ok((corrupted, outlier_mask))
}

/// A generated observation plus the ground-truth labels of which points
/// were corrupted by outlier injection.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPattern {
    pub observation: SparseObservation,
    pub outlier_mask: Vec<bool>,
}

/// Runs the full pattern pipeline for a spec: the kind's sampler (inside
/// the virtual boundary-noise view when enabled), then outlier injection.
/// `image` is required for keypoint patterns; `intrinsics` defaults to
/// [`CameraIntrinsics::default_for`] when absent.
pub fn generate(
    gt: &DepthGrid,
    image: Option<&RgbImage>,
    intrinsics: Option<&CameraIntrinsics>,
    spec: &PatternSpec,
) -> Result<GeneratedPattern, PatternError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let default_intrinsics;
    let intr = match intrinsics {
        Some(given) => given,
        None => {
            default_intrinsics = CameraIntrinsics::default_for(gt.height(), gt.width());
            &default_intrinsics
        }
    };
    let sampler = |g: &DepthGrid, r: &mut ChaCha8Rng| -> Result<SparseObservation, PatternError> {
        match spec.kind {
            PatternKind::Random { density } => sample_random(g, density, r),
            PatternKind::Keypoint { num_points } => {
                let img = image.ok_or(PatternError::MissingImage)?;
                sample_keypoints(g, img, num_points, r)
            }
            PatternKind::Lidar { num_lines } => sample_lidar(g, intr, num_lines, r),
        }
    };
    let observation = if spec.boundary_noise {
        let magnitude = default_baseline_magnitude(gt)?;
        boundary_noise(gt, intr, magnitude, &mut rng, sampler)?
    } else {
        sampler(gt, &mut rng)?
    };
    let (observation, outlier_mask) = inject_outliers(&observation, spec.outlier_fraction, gt, &mut rng)?;
    Ok(GeneratedPattern {
        observation,
        outlier_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DepthSpace;
    use rand::Rng;

    fn varied_gt(height: usize, width: usize) -> DepthGrid {
        let values: Vec<f64> = (0..height * width)
            .map(|i| 1.0 + 0.05 * ((i * 13 + 5) % 37) as f64)
            .collect();
        DepthGrid::from_dense(height, width, values, DepthSpace::Linear).unwrap()
    }

    fn checkerboard(height: usize, width: usize, cell: usize) -> RgbImage {
        let data: Vec<[f64; 3]> = (0..height * width)
            .map(|i| {
                let (r, c) = (i / width, i % width);
                let v = if (r / cell + c / cell) % 2 == 0 { 1.0 } else { 0.0 };
                [v, v, v]
            })
            .collect();
        RgbImage::new(height, width, data).unwrap()
    }

    #[test]
    fn random_sampling_honors_exact_rounded_counts() {
        let gt = varied_gt(100, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_random(&gt, 0.001, &mut rng).unwrap().count(), 10);
        // Half-to-even at 12.5 and 13.5.
        assert_eq!(sample_random(&gt, 0.00125, &mut rng).unwrap().count(), 12);
        assert_eq!(sample_random(&gt, 0.00135, &mut rng).unwrap().count(), 14);
        let all = sample_random(&gt, 1.0, &mut rng).unwrap();
        assert_eq!(all.count(), 100 * 100);
    }

    #[test]
    fn random_sampling_respects_validity_and_determinism() {
        let mut valid = vec![true; 16 * 16];
        let mut values = vec![2.0; 16 * 16];
        for idx in 0..128 {
            valid[idx] = false;
            values[idx] = 0.0;
        }
        let gt = DepthGrid::new(16, 16, values, valid, DepthSpace::Linear).unwrap();
        let obs = sample_random(&gt, 0.25, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(obs.count(), 64);
        for (row, col, value, conf) in obs.iter_valid() {
            assert!(gt.get(row, col).is_some());
            assert_eq!(value, 2.0);
            assert_eq!(conf, 1.0);
        }
        let again = sample_random(&gt, 0.25, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(obs, again);
        let other = sample_random(&gt, 0.25, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_ne!(obs, other);

        assert!(matches!(
            sample_random(&gt, 1.0, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(PatternError::NotEnoughValidPixels { needed: 256, available: 128 })
        ));
        assert!(matches!(
            sample_random(&gt, 0.0, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(PatternError::InvalidDensity(_))
        ));
        assert!(matches!(
            sample_random(&gt, 1.5, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(PatternError::InvalidDensity(_))
        ));
    }

    #[test]
    fn keypoint_sampling_reads_gt_and_fills_exactly() {
        let gt = varied_gt(48, 48);
        let image = checkerboard(48, 48, 8);
        let obs = sample_keypoints(&gt, &image, 60, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(obs.count(), 60);
        for (row, col, value, _) in obs.iter_valid() {
            assert_eq!(value, gt.get(row, col).unwrap());
        }
    }

    #[test]
    fn textureless_keypoints_degrade_to_random_sampling() {
        let gt = varied_gt(16, 16);
        let flat = RgbImage::new(16, 16, vec![[0.5; 3]; 256]).unwrap();
        // 50 points on a 16x16 grid comes out of the same uniform draw the
        // random sampler makes at the matching density.
        let from_keypoints =
            sample_keypoints(&gt, &flat, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let from_random = sample_random(&gt, 50.0 / 256.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(from_keypoints, from_random);
    }

    #[test]
    fn keypoints_concentrate_on_texture() {
        // Corners live on the checker grid lines; compare the near-line
        // point share against the uniform expectation by chi-square.
        let (h, w, cell) = (48, 48, 8);
        let gt = varied_gt(h, w);
        let image = checkerboard(h, w, cell);
        let near_line = |r: usize, c: usize| {
            let near_r = r % cell <= 1 || r % cell >= cell - 1;
            let near_c = c % cell <= 1 || c % cell >= cell - 1;
            near_r || near_c
        };
        let area: usize = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(r, c)| near_line(r, c))
            .count();
        let expected_fraction = area as f64 / (h * w) as f64;

        let obs = sample_keypoints(&gt, &image, 25, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let hits = obs
            .iter_valid()
            .filter(|&(r, c, _, _)| near_line(r, c))
            .count();
        let n = obs.count() as f64;
        let expected = expected_fraction * n;
        let chi_sq = (hits as f64 - expected).powi(2) / expected
            + ((n - hits as f64) - (n - expected)).powi(2) / (n - expected);
        // df = 1, p = 0.01 critical value.
        assert!(chi_sq > 6.63, "chi-square {chi_sq}, hits {hits}/{n}");
        assert!(hits as f64 > expected, "not concentrated on texture");
    }

    #[test]
    fn outlier_injection_counts_and_bounds() {
        let gt = varied_gt(20, 20);
        let obs = sample_random(&gt, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut sorted: Vec<f64> = gt.valid_values().collect();
        sorted.sort_by(f64::total_cmp);
        let (p5, p95) = (percentile(&sorted, 5.0), percentile(&sorted, 95.0));

        let (corrupted, outliers) =
            inject_outliers(&obs, 0.1, &gt, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let flagged = outliers.iter().filter(|&&o| o).count();
        assert_eq!(flagged, 20);
        for (idx, &is_outlier) in outliers.iter().enumerate() {
            if is_outlier {
                let v = corrupted.values()[idx];
                assert!(v >= p5 && v <= p95, "outlier {v} outside [{p5}, {p95}]");
            } else {
                assert_eq!(corrupted.values()[idx], obs.values()[idx]);
            }
            assert_eq!(corrupted.confidence()[idx], obs.confidence()[idx]);
        }
    }

    #[test]
    fn zero_fraction_is_identity_without_touching_rng() {
        let gt = varied_gt(16, 16);
        let obs = sample_random(&gt, 0.3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (same, outliers) = inject_outliers(&obs, 0.0, &gt, &mut rng).unwrap();
        assert_eq!(same, obs);
        assert!(outliers.iter().all(|&o| !o));
        assert_eq!(rng.random::<u64>(), ChaCha8Rng::seed_from_u64(21).random::<u64>());
    }

    #[test]
    fn outlier_count_matches_rounding_rule_across_draws() {
        let gt = varied_gt(16, 16);
        let obs = sample_random(&gt, 173.0 / 256.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(obs.count(), 173);
        let mut meta = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let fraction = meta.random_range(0.0..=0.1);
            let expected = (fraction * 173.0f64).round_ties_even() as usize;
            let (_, outliers) = inject_outliers(&obs, fraction, &gt, &mut meta).unwrap();
            assert_eq!(outliers.iter().filter(|&&o| o).count(), expected);
        }
    }

    #[test]
    fn spec_round_trips_through_key_values() {
        let specs = [
            PatternSpec::new(PatternKind::Random { density: 0.0123 }, 0.05, true, 7).unwrap(),
            PatternSpec::new(PatternKind::Keypoint { num_points: 500 }, 0.0, false, 42).unwrap(),
            PatternSpec::new(PatternKind::Lidar { num_lines: 64 }, 0.1, true, 9001).unwrap(),
        ];
        for spec in specs {
            let text = spec.to_key_values();
            let parsed = PatternSpec::from_key_values(&text).unwrap();
            assert_eq!(spec, parsed, "round trip failed for:\n{text}");
        }
    }

    #[test]
    fn spec_parsing_rejects_bad_inputs() {
        assert!(matches!(
            PatternSpec::from_key_values("seed = 1\n"),
            Err(PatternError::MissingSpecField("kind"))
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = lidar\nlines = 64\n"),
            Err(PatternError::MissingSpecField("seed"))
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = lidar\nlines = 64\ndensity = 0.5\nseed = 1\n"),
            Err(PatternError::ForeignSpecField { .. })
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = random\ndensity = 0.5\nwat = 1\nseed = 1\n"),
            Err(PatternError::UnknownSpecField(_))
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = random\ndensity\nseed = 1\n"),
            Err(PatternError::MalformedSpec { line: 2, .. })
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = sonar\nseed = 1\n"),
            Err(PatternError::MalformedSpec { line: 1, .. })
        ));
        assert!(matches!(
            PatternSpec::from_key_values("kind = random\ndensity = 2.0\nseed = 1\n"),
            Err(PatternError::InvalidDensity(_))
        ));
        // Comments and blank lines are fine.
        let spec = PatternSpec::from_key_values(
            "# synthetic scan\n\nkind = lidar\nlines = 32\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(spec.kind, PatternKind::Lidar { num_lines: 32 });
        assert_eq!(spec.outlier_fraction, 0.0);
        assert!(!spec.boundary_noise);
    }

    #[test]
    fn generate_is_bit_deterministic() {
        let gt = varied_gt(32, 32);
        let spec =
            PatternSpec::new(PatternKind::Lidar { num_lines: 16 }, 0.05, true, 123).unwrap();
        let a = generate(&gt, None, None, &spec).unwrap();
        let b = generate(&gt, None, None, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.outlier_mask.iter().any(|&o| o));

        let different_seed =
            PatternSpec::new(PatternKind::Lidar { num_lines: 16 }, 0.05, true, 124).unwrap();
        let c = generate(&gt, None, None, &different_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_requires_image_for_keypoints() {
        let gt = varied_gt(32, 32);
        let spec = PatternSpec::new(PatternKind::Keypoint { num_points: 20 }, 0.0, false, 1).unwrap();
        assert!(matches!(
            generate(&gt, None, None, &spec),
            Err(PatternError::MissingImage)
        ));
        let image = checkerboard(32, 32, 8);
        let pattern = generate(&gt, Some(&image), None, &spec).unwrap();
        assert_eq!(pattern.observation.count(), 20);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -2.0, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, -1.0, 1.0).is_err());
        let intr = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        assert!(intr.validate_for(48, 64).is_ok());
        assert!(intr.validate_for(20, 64).is_err());
        assert!(intr.validate_for(48, 30).is_err());
        let default = CameraIntrinsics::default_for(48, 64);
        assert_eq!(default.fx, 64.0);
        assert_eq!((default.cx, default.cy), (32.0, 24.0));
    }
}
