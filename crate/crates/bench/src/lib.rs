//! Scene fixtures shared by the benchmarks.
//!
//! Everything here is deterministic: scenes are closed-form surfaces and
//! observations come from a seeded generator, so timings are comparable
//! across runs and commits.

use depthfill_core::{DepthGrid, DepthSpace, RgbImage, SparseObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth positive surface with structure at several spatial frequencies.
pub fn wavy_scene(height: usize, width: usize) -> DepthGrid {
    let mut values = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            let y = row as f64 / height as f64;
            let x = col as f64 / width as f64;
            values.push(4.0 + 1.5 * (6.0 * x).sin() * (4.0 * y).cos() + 0.8 * y + 0.5 * x);
        }
    }
    DepthGrid::from_dense(height, width, values, DepthSpace::Linear)
        .expect("fixture surface stays positive")
}

/// Keeps roughly `density` of the scene's valid pixels as observations.
pub fn random_observation(gt: &DepthGrid, density: f64, seed: u64) -> SparseObservation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = gt
        .valid()
        .iter()
        .map(|&ok| ok && rng.random_bool(density))
        .collect();
    SparseObservation::new(gt.height(), gt.width(), gt.values().to_vec(), mask)
        .expect("fixture mask matches the scene")
}

/// High-contrast checkerboard, the classic corner-detector workload.
pub fn checker_image(height: usize, width: usize, cell: usize) -> RgbImage {
    assert!(cell >= 1);
    let mut data = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            let v = if ((row / cell) + (col / cell)) % 2 == 0 { 0.1 } else { 0.9 };
            data.push([v, v, v]);
        }
    }
    RgbImage::new(height, width, data).expect("fixture image matches the shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_requested_shapes() {
        let gt = wavy_scene(32, 48);
        assert_eq!(gt.shape(), (32, 48));
        assert!(gt.valid_values().all(|v| v > 0.0));

        let obs = random_observation(&gt, 0.1, 7);
        assert_eq!(obs.shape(), (32, 48));
        assert!(obs.count() > 0 && obs.count() < 32 * 48);
        assert_eq!(obs, random_observation(&gt, 0.1, 7));

        let img = checker_image(16, 16, 4);
        assert_eq!(img.pixel(0, 0), img.pixel(3, 3));
        assert_ne!(img.pixel(0, 0), img.pixel(0, 4));
    }
}
