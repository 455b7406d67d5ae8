use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse scenario document: {0}")]
    Parse(String),

    #[error("field `{field}` out of range: {reason}")]
    OutOfRange { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("conic program is infeasible")]
    Infeasible,

    #[error("conic solver failed: {0}")]
    SolverFailure(String),

    #[error("no feasible candidate after {0} randomization trials")]
    RandomizationExhausted(usize),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("initialization infeasible after {0} attempts")]
    InitializationInfeasible(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn out_of_range(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::OutOfRange {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}
