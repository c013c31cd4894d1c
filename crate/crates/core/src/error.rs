use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("`{operation}` is not supported for {kind} profiles")]
    Unsupported {
        operation: &'static str,
        kind: &'static str,
    },

    /// A requested accuracy could not be reached (quadrature, root finding).
    #[error("numerical accuracy: {0}")]
    Accuracy(String),

    /// Inverse iteration did not reach the residual target; carries the best
    /// residual seen.
    #[error("inverse iteration stagnated for eigenvalue {eigenvalue} (best residual {residual:e})")]
    Stagnation { eigenvalue: f64, residual: f64 },

    #[error("{value} is outside the admissible range: {reason}")]
    Domain { value: f64, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to read table {path}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for failures caused by the caller's inputs rather than by the
    /// numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidProfile(_)
                | Error::InvalidArgument(_)
                | Error::Unsupported { .. }
                | Error::Domain { .. }
                | Error::InsufficientData(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Csv { .. }
        )
    }
}
