use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value produced by `{primitive}` (node {node})")]
    NonFinite { primitive: &'static str, node: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} of size {size} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("hessian schedule violated at step {step}: {reason}")]
    Schedule { step: u64, reason: &'static str },

    #[error("hessian is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gamma tuning failed: {0}")]
    Tuning(String),

    #[error("runs are incomparable: {0}")]
    Incomparable(String),

    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::Shape(_) => "shape",
            Error::TooLarge { .. } => "too_large",
            Error::Unsupported(_) => "unsupported",
            Error::Schedule { .. } => "schedule",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::Precondition(_) => "precondition",
            Error::Parameter(_) => "parameter",
            Error::Config(_) => "config",
            Error::Tuning(_) => "tuning",
            Error::Incomparable(_) => "incomparable",
            Error::Csv { .. } => "csv",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
