use thiserror::Error;

/// Errors raised across the engine.
///
/// The harness maps these onto process exit codes, so the variants follow
/// the failure classes callers care about rather than where they happened.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("decay fit needs at least 4 usable points, got {} (n = {:?})", .usable.len(), .usable)]
    Fit { usable: Vec<f64> },
    #[error("integration step too coarse: {0}")]
    Step(String),
    #[error("batch aborted after {completed} trials: {source}")]
    Batch {
        completed: usize,
        partial_mean: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
