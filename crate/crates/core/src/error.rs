use std::path::PathBuf;

/// Errors raised by the toolkit.
///
/// The variants map onto the process exit codes of the `wulffflow` binary:
/// configuration problems exit with 2, numeric and convergence failures with 3,
/// invariant violations with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("outside the domain of definition: {0}")]
    Domain(String),

    #[error("numeric failure: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e}, target {target:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("invariant violated: {message}")]
    Invariant {
        message: String,
        /// Snapshot of the offending state, when one was written.
        dump: Option<PathBuf>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant {
            message: msg.into(),
            dump: None,
        }
    }

    pub fn numeric(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numeric {
            message: msg.into(),
            residual,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Io { .. } => 2,
            Error::Numeric { .. } | Error::Convergence { .. } | Error::Domain(_) => 3,
            Error::Invariant { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
