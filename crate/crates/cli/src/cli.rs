//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthfill_core::CameraIntrinsics;

#[derive(Parser)]
#[command(
    name = "depthfill",
    version,
    about = "Gradient-domain completion of sparse depth maps",
    long_about = "Gradient-domain completion of sparse depth maps, with synthetic \
observation patterns, evaluation metrics, Monte Carlo noise studies, and PNG rendering.\n\n\
Depth files are .pfm (32-bit float, non-positive or NaN = invalid) or .png \
(16-bit grayscale, depth = raw/256 m, 0 = invalid).\n\n\
Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not converge \
(the output file is still written)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Complete a sparse depth map into a dense one.
    Complete(CompleteArgs),
    /// Sample a synthetic sparse observation pattern from dense ground truth.
    Synth(SynthArgs),
    /// Compare a predicted depth map against ground truth.
    Eval(EvalArgs),
    /// Run Monte Carlo noise-propagation studies of the solver.
    Simulate(SimulateArgs),
    /// Render a depth map or a profile CSV as a PNG image.
    Render(RenderArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    /// All-zero gradient targets: the smoothest surface through the points.
    Zero,
    /// Exact gradients of the --gt grid.
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    /// Uniform random pixels at --density.
    Random,
    /// Corner-detector keypoints on --image, topped up randomly.
    Keypoint,
    /// Rotating-scanner elevation lines.
    Lidar,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    /// Evaluate the prediction as-is.
    None,
    /// Fit scale and shift to --sparse in depth space first.
    Depth,
    /// Fit scale and shift in inverse-depth space first.
    Disparity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Cumulative-sum integration of noisy 1D gradients.
    #[value(name = "1d")]
    OneD,
    /// Full solver on a strip observed at both ends.
    #[value(name = "2d")]
    TwoD,
}

#[derive(Args)]
#[command(after_help = "Inputs whose dimensions are not divisible by 2^(RESOLUTIONS-1) are \
padded (sparse maps with invalid pixels, dense ones by edge replication) and the output is \
cropped back to the input size.")]
pub struct CompleteArgs {
    /// Sparse depth input (.pfm or .png).
    #[arg(long)]
    pub sparse: PathBuf,
    /// RGB image; accepted for interface stability, unused by the built-in predictors.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Dense depth output (.pfm or .png).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of pyramid levels (1 to 10).
    #[arg(long, default_value_t = 3)]
    pub resolutions: usize,
    /// Weight of the observation term relative to the gradient terms.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Source of the gradient targets.
    #[arg(long, value_enum, default_value = "zero")]
    pub predictor: PredictorArg,
    /// Dense ground-truth depth, required by --predictor oracle.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Relative residual tolerance of the conjugate-gradient solve.
    #[arg(long, default_value_t = 1e-8)]
    pub cg_tol: f64,
    /// Iteration cap for the solve (default 10 * height * width).
    #[arg(long)]
    pub cg_max_iters: Option<usize>,
    /// Accepted for interface stability; the built-in predictors are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Dense ground-truth depth to sample from (.pfm or .png).
    #[arg(long)]
    pub gt: PathBuf,
    /// Observation pattern to generate.
    #[arg(long, value_enum, required_unless_present = "spec", conflicts_with = "spec")]
    pub pattern: Option<PatternArg>,
    /// Fraction of pixels to observe (random pattern).
    #[arg(long, conflicts_with = "spec")]
    pub density: Option<f64>,
    /// Number of keypoints to observe (keypoint pattern).
    #[arg(long, conflicts_with = "spec")]
    pub points: Option<usize>,
    /// Number of scanner lines (lidar pattern, 4 to 128).
    #[arg(long, conflicts_with = "spec")]
    pub lines: Option<usize>,
    /// Fraction of points replaced by percentile-range outliers (0 to 0.1).
    #[arg(long, default_value_t = 0.0, conflicts_with = "spec")]
    pub outlier_frac: f64,
    /// Corrupt depths near occlusion edges via a displaced virtual view.
    #[arg(long, conflicts_with = "spec")]
    pub boundary_noise: bool,
    /// Pinhole intrinsics as fx,fy,cx,cy (defaults derived from the grid size).
    #[arg(long, value_parser = parse_intrinsics)]
    pub intrinsics: Option<CameraIntrinsics>,
    /// Intensity image, required by the keypoint pattern.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Pattern settings file (`key = value` lines) instead of inline flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// RNG seed; identical seeds reproduce the pattern byte for byte.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub seed: Option<u64>,
    /// Sparse depth output (.pfm or .png).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
#[command(after_help = "Writes a two-line CSV: the header \
`rmse,mae,rel,delta1,irmse,imae,valid_pixel_count` and one data row. rmse is divided by \
--rmse-divisor; irmse and imae are inverse-depth errors in 1/km; delta1 is the fraction of \
pixels with max(pred/gt, gt/pred) < 1.25.")]
pub struct EvalArgs {
    /// Predicted depth (.pfm or .png).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth depth (.pfm or .png).
    #[arg(long)]
    pub gt: PathBuf,
    /// Global scale/shift alignment applied to the prediction first.
    #[arg(long, value_enum, default_value = "none")]
    pub align: AlignArg,
    /// Sparse reference depths to align against (required unless --align none).
    #[arg(long)]
    pub sparse: Option<PathBuf>,
    /// Divisor applied to the reported rmse.
    #[arg(long, default_value_t = 1.0)]
    pub rmse_divisor: f64,
    /// Invalidate ground-truth pixels whose neighbors deviate by more than
    /// this relative amount.
    #[arg(long)]
    pub gt_neighbor_filter: Option<f64>,
    /// Metrics CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
#[command(after_help = "--mode 1d writes `distance,analytic_var,empirical_var,ci95`, one row \
per distance 1..length, where ci95 is the 1.96-sigma half-width of the error distribution. \
--mode 2d writes `distance,std_r<R>,...` with one column per entry of --resolutions, where \
each value is the per-column maximum error standard deviation across a 4-row strip observed \
at both ends.")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Standard deviation of the gradient noise.
    #[arg(long)]
    pub sigma: f64,
    /// Length of the integration path (1d) or strip (2d).
    #[arg(long)]
    pub length: usize,
    /// Pyramid level counts compared in 2d mode (comma separated, each 1 to 3);
    /// accepted and ignored in 1d mode.
    #[arg(long, value_delimiter = ',', required = true)]
    pub resolutions: Vec<usize>,
    /// Number of Monte Carlo trials (at least 100).
    #[arg(long)]
    pub trials: usize,
    /// RNG seed.
    #[arg(long)]
    pub seed: u64,
    /// Profile CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RenderArgs {
    /// Depth map (.pfm or .png) or profile CSV to visualize.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// PNG output path.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_intrinsics(s: &str) -> Result<CameraIntrinsics, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected fx,fy,cx,cy, got {} values", parts.len()));
    }
    let mut nums = [0.0f64; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("`{}` is not a number", part.trim()))?;
    }
    CameraIntrinsics::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| e.to_string())
}
