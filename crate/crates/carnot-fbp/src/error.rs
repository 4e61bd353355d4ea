/// Errors shared by all modules.
///
/// Solver failures carry enough diagnostic payload (last iterate, offending
/// node) to be dumped by the CLI without re-running the solve.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what}: iteration limit reached after {iterations} iterations (residual {residual:.3e})")]
    IterationLimit {
        what: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate, for post-mortem dumps.
        last: Vec<f64>,
    },

    #[error("{what}: positivity violated at node {node} (value {value:.3e})")]
    PositivityViolation {
        what: &'static str,
        node: usize,
        value: f64,
        dump: Vec<f64>,
    },

    #[error("line search stagnated: {0}")]
    Stagnation(String),

    #[error("mountain pass geometry failure: {0}")]
    GeometryFailure(String),

    #[error("shooting bracket failed: {0}")]
    NoSolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
