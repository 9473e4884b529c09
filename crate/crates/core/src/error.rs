use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unresolved geometry: {0}")]
    UnresolvedGeometry(String),
    #[error("invalid nesting: {0}")]
    InvalidNesting(String),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("point ({0}, {1}) lies inside the obstacle")]
    PointInObstacle(f64, f64),
    #[error("degenerate collar: {0}")]
    DegenerateCollar(String),
    #[error("time step {dt} exceeds the stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("wavefront reaches the box boundary: {0}")]
    BoxContamination(String),
    #[error("{unknowns} unknowns is too large for the dense oracle (limit {limit})")]
    TooLargeForOracle { unknowns: usize, limit: usize },
    #[error("initial data are identically zero")]
    ZeroInitialData,
    #[error("need at least {needed} samples in the fit window, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("non-positive ratio {0} cannot be fitted in log scale")]
    NonPositiveRatio(f64),
    #[error("collar extension solve failed: {0}")]
    SingularCollarSolve(String),
    #[error("K_T is not a contraction (residual ratio {ratio:.4} at T = {horizon})")]
    NotAContraction { ratio: f64, horizon: f64 },
    #[error("fixed-point iteration did not reach tolerance in {0} iterations")]
    MaxIterExceeded(usize),
    #[error("trace extraction failed: {0}")]
    TraceExtractionFailure(String),
    #[error("incompatible control signal: {0}")]
    IncompatibleSignal(String),
    #[error("Robin ghost-cell system is singular: {0}")]
    RobinSingular(String),
    #[error("ray tracing needs piecewise-constant coefficients: zone {0} varies in space")]
    UnsupportedVariableMetric(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CflViolation { .. } => 3,
            Error::NotAContraction { .. } | Error::MaxIterExceeded(_) => 4,
            Error::UnresolvedGeometry(_)
            | Error::InvalidNesting(_)
            | Error::InvalidCoefficients(_)
            | Error::PointInObstacle(..)
            | Error::DegenerateCollar(_)
            | Error::TooLargeForOracle { .. }
            | Error::ZeroInitialData
            | Error::IncompatibleSignal(_)
            | Error::UnsupportedVariableMetric(_)
            | Error::Config(_) => 2,
            _ => 1,
        }
    }
}
