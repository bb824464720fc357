//! Subcommand implementations. Flag-value problems surface as
//! [`CliError::Usage`]; anything wrong with file contents or the data they
//! describe flows through as ordinary errors (exit code 2).

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use depthfill_core::eval;
use depthfill_core::patterns;
use depthfill_core::sim;
use depthfill_core::{
    complete, AlignmentSpace, EvalError, GradientPredictor, Grid, IntegratorError, MetricsReport,
    OraclePredictor, PatternKind, PatternSpec, SimError, SolverConfig, SparseObservation,
    ZeroPredictor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cli::{
    AlignArg, CompleteArgs, EvalArgs, ModeArg, PatternArg, PredictorArg, RenderArgs, SimulateArgs,
    SynthArgs,
};
use crate::{formats, pad, render, CliError};

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(CliError::Usage(message.into()))
}

const MAX_RESOLUTIONS: usize = 10;

pub fn cmd_complete(args: CompleteArgs) -> Result<()> {
    if !(1..=MAX_RESOLUTIONS).contains(&args.resolutions) {
        return Err(usage(format!(
            "--resolutions must be between 1 and {MAX_RESOLUTIONS}, got {}",
            args.resolutions
        )));
    }
    if !(args.alpha > 0.0 && args.alpha.is_finite()) {
        return Err(usage(format!("--alpha must be positive and finite, got {}", args.alpha)));
    }
    if !(args.cg_tol > 0.0 && args.cg_tol < 1.0) {
        return Err(usage(format!("--cg-tol must lie in (0, 1), got {}", args.cg_tol)));
    }
    if args.cg_max_iters == Some(0) {
        return Err(usage("--cg-max-iters must be at least 1"));
    }

    let sparse_grid = formats::read_depth(&args.sparse)?;
    let obs = SparseObservation::from_depth_grid(&sparse_grid)?;
    let (height, width) = obs.shape();
    let factor = 1usize << (args.resolutions - 1);
    let padded_obs = pad::pad_sparse(&obs, factor)?;

    let image = match &args.image {
        Some(path) => Some(pad::pad_image(&formats::read_image(path)?, factor)?),
        None => None,
    };

    let predictor: Box<dyn GradientPredictor> = match args.predictor {
        PredictorArg::Zero => Box::new(ZeroPredictor),
        PredictorArg::Oracle => {
            let gt_path = args
                .gt
                .as_ref()
                .ok_or_else(|| usage("--predictor oracle requires --gt"))?;
            let gt = formats::read_depth(gt_path)?;
            if gt.shape() != (height, width) {
                return Err(anyhow!(
                    "ground truth is {}x{} but the sparse input is {height}x{width}",
                    gt.height(),
                    gt.width()
                ));
            }
            let padded_gt = pad::pad_depth(&gt, factor)?;
            Box::new(OraclePredictor::new(&padded_gt).context("oracle predictor needs dense ground truth")?)
        }
    };

    let config = SolverConfig {
        alpha: args.alpha,
        num_resolutions: args.resolutions,
        cg_rel_tol: args.cg_tol,
        cg_max_iters: args.cg_max_iters,
        ..SolverConfig::default()
    };

    match complete(image.as_ref(), &padded_obs, predictor.as_ref(), &config) {
        Ok(solution) => {
            let out = pad::crop_depth(&solution.depth, height, width)?;
            formats::write_depth(&out, &args.out)?;
            println!(
                "wrote {} ({} CG iterations, relative residual {:.3e})",
                args.out.display(),
                solution.report.iterations,
                solution.report.final_rel_residual
            );
            Ok(())
        }
        Err(IntegratorError::DidNotConverge(solution)) => {
            let out = pad::crop_depth(&solution.depth, height, width)?;
            formats::write_depth(&out, &args.out)?;
            println!("wrote {} (not converged)", args.out.display());
            Err(CliError::NonConvergence(solution.report.final_rel_residual).into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    let gt = formats::read_depth(&args.gt)?;
    let spec = match &args.spec {
        Some(path) => {
            let text = read_text(path)?;
            PatternSpec::from_key_values(&text)
                .with_context(|| format!("invalid pattern settings in {}", path.display()))?
        }
        None => build_spec_from_flags(&args)?,
    };

    let image = match &args.image {
        Some(path) => Some(formats::read_image(path)?),
        None => None,
    };
    if matches!(spec.kind, PatternKind::Keypoint { .. }) && image.is_none() {
        return Err(usage("the keypoint pattern requires --image"));
    }

    let generated = patterns::generate(&gt, image.as_ref(), args.intrinsics.as_ref(), &spec)?;
    let depth = generated.observation.to_depth_grid()?;
    formats::write_depth(&depth, &args.out)?;
    let outliers = generated.outlier_mask.iter().filter(|&&o| o).count();
    println!(
        "wrote {} ({} points, {} outliers)",
        args.out.display(),
        generated.observation.count(),
        outliers
    );
    Ok(())
}

fn build_spec_from_flags(args: &SynthArgs) -> Result<PatternSpec> {
    let pattern = args.pattern.expect("clap requires --pattern without --spec");
    let reject = |flag: &str, owner: &str| -> Result<()> {
        Err(usage(format!("--{flag} applies only to --pattern {owner}")))
    };
    let kind = match pattern {
        PatternArg::Random => {
            if args.points.is_some() {
                reject("points", "keypoint")?;
            }
            if args.lines.is_some() {
                reject("lines", "lidar")?;
            }
            let density = args
                .density
                .ok_or_else(|| usage("--pattern random requires --density"))?;
            PatternKind::Random { density }
        }
        PatternArg::Keypoint => {
            if args.density.is_some() {
                reject("density", "random")?;
            }
            if args.lines.is_some() {
                reject("lines", "lidar")?;
            }
            let num_points = args
                .points
                .ok_or_else(|| usage("--pattern keypoint requires --points"))?;
            PatternKind::Keypoint { num_points }
        }
        PatternArg::Lidar => {
            if args.density.is_some() {
                reject("density", "random")?;
            }
            if args.points.is_some() {
                reject("points", "keypoint")?;
            }
            let num_lines = args
                .lines
                .ok_or_else(|| usage("--pattern lidar requires --lines"))?;
            PatternKind::Lidar { num_lines }
        }
    };
    let seed = args.seed.expect("clap requires --seed without --spec");
    PatternSpec::new(kind, args.outlier_frac, args.boundary_noise, seed)
        .map_err(|e| usage(e.to_string()))
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pred = formats::read_depth(&args.pred)?;
    let mut gt = formats::read_depth(&args.gt)?;
    if pred.shape() != gt.shape() {
        return Err(anyhow!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        ));
    }
    if let Some(threshold) = args.gt_neighbor_filter {
        gt = eval::filter_gt_neighbors(&gt, threshold).map_err(flag_eval_error)?;
    }

    let report = match args.align {
        AlignArg::None => {
            eval::compute_depth_metrics(&pred, &gt, args.rmse_divisor).map_err(flag_eval_error)?
        }
        AlignArg::Depth | AlignArg::Disparity => {
            let sparse_path = args
                .sparse
                .as_ref()
                .ok_or_else(|| usage("--align depth|disparity requires --sparse"))?;
            let sparse_grid = formats::read_depth(sparse_path)?;
            let sparse = SparseObservation::from_depth_grid(&sparse_grid)?;
            let space = match args.align {
                AlignArg::Depth => AlignmentSpace::Depth,
                _ => AlignmentSpace::Disparity,
            };
            let alignment = eval::align_scale_shift(&pred, &sparse, space)?;
            println!(
                "alignment: scale {:.6} shift {:.6}{}",
                alignment.scale,
                alignment.shift,
                if alignment.scale_only { " (scale-only fallback)" } else { "" }
            );
            let mask: Vec<bool> = pred
                .valid()
                .iter()
                .zip(gt.valid())
                .map(|(&p, &g)| p && g)
                .collect();
            let gt_raw = Grid::from_vec(gt.height(), gt.width(), gt.values().to_vec())?;
            eval::compute_metrics(&alignment.raw, &gt_raw, &mask, args.rmse_divisor)
                .map_err(flag_eval_error)?
        }
    };

    let header = MetricsReport::csv_header();
    let row = report.to_csv_row();
    fs::write(&args.out, format!("{header}\n{row}\n"))?;
    println!("{header}");
    println!("{row}");
    Ok(())
}

/// Divisor and threshold come straight from flags, so their range errors
/// are usage errors rather than data errors.
fn flag_eval_error(e: EvalError) -> anyhow::Error {
    match e {
        EvalError::InvalidDivisor(_) | EvalError::InvalidThreshold(_) => usage(e.to_string()),
        other => other.into(),
    }
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let csv = match args.mode {
        ModeArg::OneD => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let profile = sim::simulate_1d(args.sigma, args.length, args.trials, &mut rng)
                .map_err(flag_sim_error)?;
            profile.to_csv()
        }
        ModeArg::TwoD => {
            if args.length < 2 {
                return Err(usage("--mode 2d needs --length of at least 2"));
            }
            if args.resolutions.is_empty() {
                return Err(usage("--resolutions must list at least one level count"));
            }
            for &r in &args.resolutions {
                if !(1..=3).contains(&r) {
                    return Err(usage(format!(
                        "--resolutions entries must be 1 to 3 (the strip is 4 rows tall), got {r}"
                    )));
                }
                let factor = 1usize << (r - 1);
                if args.length % factor != 0 {
                    return Err(usage(format!(
                        "--length {} is not divisible by {factor}, required for {r} resolutions",
                        args.length
                    )));
                }
            }
            let (shape, pattern) = sim::two_anchor_strip(args.length);
            let mut columns: Vec<Vec<f64>> = Vec::with_capacity(args.resolutions.len());
            for &r in &args.resolutions {
                // A fresh RNG per level count pairs the noise across columns.
                let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
                let std = sim::simulate_solver_2d(
                    shape,
                    &pattern,
                    args.sigma,
                    r,
                    args.trials,
                    &SolverConfig::default(),
                    &mut rng,
                )
                .map_err(flag_sim_error)?;
                let per_column: Vec<f64> = (0..args.length)
                    .map(|col| {
                        (0..shape.0)
                            .map(|row| std.get(row, col))
                            .fold(0.0, f64::max)
                    })
                    .collect();
                columns.push(per_column);
            }
            let mut csv = String::from("distance");
            for &r in &args.resolutions {
                csv.push_str(&format!(",std_r{r}"));
            }
            csv.push('\n');
            for col in 0..args.length {
                csv.push_str(&col.to_string());
                for series in &columns {
                    csv.push_str(&format!(",{}", series[col]));
                }
                csv.push('\n');
            }
            csv
        }
    };
    fs::write(&args.out, csv)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn flag_sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::InvalidSigma(_) | SimError::TooFewTrials { .. } | SimError::EmptyProfile => {
            usage(e.to_string())
        }
        other => other.into(),
    }
}

pub fn cmd_render(args: RenderArgs) -> Result<()> {
    let extension = args
        .input
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let canvas = if extension.as_deref() == Some("csv") {
        let text = read_text(&args.input)?;
        render::profile_plot(&text)?
    } else {
        let grid = formats::read_depth(&args.input)?;
        render::colormap_image(&grid)?
    };
    canvas.save_with_format(&args.out, image::ImageFormat::Png)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(formats::FormatError::FileNotFound(path.to_path_buf()).into())
        }
        Err(e) => Err(e.into()),
    }
}
