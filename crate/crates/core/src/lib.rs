//! Dense depth from sparse observations plus predicted log-depth gradients.
//!
//! The pipeline: normalize sparse depths to a canonical scale
//! ([`scalenorm`]), predict per-level gradient maps ([`predictor`]), solve a
//! linear least-squares system coupling the observations with the gradients
//! at several resolutions ([`integrator`]), and exponentiate back to metric
//! depth. Supporting modules synthesize sparse observation patterns
//! ([`patterns`]), score results ([`eval`]), provide training losses
//! ([`losses`]), and validate the solver's error statistics against the
//! closed-form random-walk law ([`sim`]).

pub mod eval;
pub mod grid;
pub mod integrator;
pub mod losses;
pub mod patterns;
pub mod predictor;
pub mod scalenorm;
pub mod sim;

pub use eval::{Alignment, AlignmentSpace, EvalError, MetricsReport};
pub use grid::{DepthGrid, DepthSpace, GradientPyramid, Grid, GridError, RgbImage, SparseObservation};
pub use integrator::{
    complete, solve, solve_dense_oracle, IntegratorError, Preconditioner, Solution, SolveReport,
    SolverConfig,
};
pub use losses::{LaplacianParams, LossError, LossSpace};
pub use patterns::{CameraIntrinsics, GeneratedPattern, PatternError, PatternKind, PatternSpec};
pub use predictor::{
    GradientPredictor, NoisyOraclePredictor, OraclePredictor, PredictorError, ZeroPredictor,
};
pub use scalenorm::{NormalizedObservation, ScaleNormError};
pub use sim::{SimError, VarianceProfile};
