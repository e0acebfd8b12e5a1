//! Error type shared by every stage of the design pipeline.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("coefficient `{name}` is not positive at x = {x} (value {value})")]
    NonPositiveCoefficient { name: &'static str, x: f64, value: f64 },

    #[error("grid too coarse for {modes} modes: {reason}")]
    GridTooCoarse { modes: usize, reason: String },

    #[error("cutoff N = {cutoff} exceeds the {computed} computed modes")]
    CutoffExceedsComputedModes { cutoff: usize, computed: usize },

    #[error("mu = {mu} must be positive")]
    MuNotPositive { mu: f64 },

    #[error("mu = {mu} collides with eigenvalue lambda_{index} = {lambda}")]
    MuCollidesWithSpectrum { mu: f64, index: usize, lambda: f64 },

    #[error("lambda_(N+1) = {lambda} is not positive for N = {cutoff}")]
    CutoffNotStrictlyStable { cutoff: usize, lambda: f64 },

    #[error("input matrix is singular (|det B| = {det:e})")]
    SingularB { det: f64 },

    #[error("pole placement failed: {0}")]
    PlacementFailed(String),

    #[error("matrix inequality check failed: {0}")]
    LyapunovIndefinite(String),

    #[error("no truncation index M <= {max} satisfies the tail condition")]
    TailBoundFailed { max: usize },

    #[error("kernel truncation M = {m} exceeds the {computed} computed modes")]
    KernelTruncationExceedsModes { m: usize, computed: usize },

    #[error("state has relative remainder energy {ratio:e} outside the computed modes")]
    RemainderTooLarge { ratio: f64 },

    #[error("matrix inverse failed: {0}")]
    DegenerateDenominator(String),

    #[error("no admissible zeta on the search grid")]
    NoAdmissibleZeta,

    #[error("no admissible a on the search grid")]
    NoAdmissibleA,

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("simulation unstable at t = {t}: norm {norm:e} exceeds {limit:e}")]
    Instability { t: f64, norm: f64, limit: f64 },

    #[error("step size too large for rk4: lambda_max * dt = {product}")]
    StepSizeTooLarge { product: f64 },

    #[error("quadrature budget exceeded: {needed:e} > {budget:e} point evaluations")]
    QuadratureBudgetExceeded { needed: f64, budget: f64 },

    #[error("trajectory is degenerate: {0}")]
    DegenerateTrajectory(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
