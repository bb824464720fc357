use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use depthfill_bench::{checker_image, random_observation, wavy_scene};
use depthfill_core::eval::compute_depth_metrics;
use depthfill_core::integrator::assemble_normal_system;
use depthfill_core::patterns::generate;
use depthfill_core::{
    complete, GradientPyramid, PatternKind, PatternSpec, SolverConfig, ZeroPredictor,
};

fn normal_system_apply(c: &mut Criterion) {
    let gt = wavy_scene(128, 128);
    let obs = random_observation(&gt, 0.05, 1);
    let log = gt.to_grid().unwrap().map(f64::ln);
    let pyramid = GradientPyramid::from_log_grid(&log, 3).unwrap();
    let config = SolverConfig {
        num_resolutions: 3,
        ..SolverConfig::default()
    };
    let system = assemble_normal_system(&obs, &pyramid, &config).unwrap();
    c.bench_function("normal_system_apply/128x128_r3", |b| {
        b.iter(|| black_box(system.apply(black_box(&log))))
    });
}

fn complete_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("complete");
    group.sample_size(10);
    for &(size, levels) in &[(64usize, 1usize), (64, 3), (128, 3)] {
        let gt = wavy_scene(size, size);
        let obs = random_observation(&gt, 0.05, 2);
        let config = SolverConfig {
            num_resolutions: levels,
            ..SolverConfig::default()
        };
        group.bench_function(format!("{size}x{size}_r{levels}"), |b| {
            b.iter(|| complete(None, black_box(&obs), &ZeroPredictor, &config).unwrap())
        });
    }
    group.finish();
}

fn pattern_generation(c: &mut Criterion) {
    let gt = wavy_scene(192, 256);
    let image = checker_image(192, 256, 16);
    let mut group = c.benchmark_group("patterns");
    group.sample_size(20);

    let lidar = PatternSpec::new(PatternKind::Lidar { num_lines: 64 }, 0.0, false, 9).unwrap();
    group.bench_function("lidar_64_lines_192x256", |b| {
        b.iter(|| generate(black_box(&gt), None, None, &lidar).unwrap())
    });

    let keypoint =
        PatternSpec::new(PatternKind::Keypoint { num_points: 200 }, 0.0, false, 9).unwrap();
    group.bench_function("keypoint_200_192x256", |b| {
        b.iter(|| generate(black_box(&gt), Some(&image), None, &keypoint).unwrap())
    });

    let noisy = PatternSpec::new(PatternKind::Random { density: 0.05 }, 0.1, true, 9).unwrap();
    group.bench_function("random_with_outliers_and_boundary_noise_192x256", |b| {
        b.iter(|| generate(black_box(&gt), None, None, &noisy).unwrap())
    });

    group.finish();
}

fn metrics(c: &mut Criterion) {
    let gt = wavy_scene(480, 640);
    let pred = {
        let bumped: Vec<f64> = gt.values().iter().map(|v| v * 1.01 + 0.02).collect();
        depthfill_core::DepthGrid::from_dense(480, 640, bumped, depthfill_core::DepthSpace::Linear)
            .unwrap()
    };
    c.bench_function("metrics/480x640", |b| {
        b.iter(|| compute_depth_metrics(black_box(&pred), black_box(&gt), 1.0).unwrap())
    });
}

criterion_group!(
    benches,
    normal_system_apply,
    complete_solve,
    pattern_generation,
    metrics
);
criterion_main!(benches);
