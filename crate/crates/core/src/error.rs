use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no resonance found: {0}")]
    NoResonance(String),

    #[error("optimizer did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("unphysical fit result: {0}")]
    Unphysical(String),

    #[error("insufficient dynamic range: {0}")]
    InsufficientRange(String),

    #[error("frequency {freq_hz} Hz outside calibrated range [{lo_hz}, {hi_hz}] Hz")]
    OutOfRange { freq_hz: f64, lo_hz: f64, hi_hz: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
