use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected t_max={expected_t_max}, step={expected_step}; got t_max={t_max}, step={step}")]
    GridMismatch {
        expected_t_max: f64,
        expected_step: f64,
        t_max: f64,
        step: f64,
    },

    #[error("invalid interval: lower bound {lower} exceeds upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("derivative vanished at x={x} (|g'|={derivative:e})")]
    FlatDerivative { x: f64, derivative: f64 },

    #[error("Laplace transform underflow at t={t} (argument {argument})")]
    LaplaceUnderflow { t: f64, argument: f64 },

    #[error("inverse Laplace transform argument {0} outside (0, 1]")]
    InverseDomain(f64),

    #[error("division by zero at {count} node(s), first at t={first_t}")]
    DivisionByZero { count: usize, first_t: f64 },

    #[error("malformed trajectory {id}: {reason}")]
    MalformedTrajectory { id: u64, reason: String },

    #[error("malformed counting-process data for id {id}: {reason}")]
    MalformedRows { id: u64, reason: String },

    #[error("monotone likelihood: {0}")]
    MonotoneLikelihood(String),

    #[error("undefined log-survival ratio: {0}")]
    UndefinedRatio(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
