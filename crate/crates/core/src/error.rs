//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument for {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("qubit count {n} outside supported range 1..=16")]
    QubitCount { n: usize },

    #[error("parameter vector length {got} does not match circuit slots {expected}")]
    ParamLength { got: usize, expected: usize },

    #[error("optimizer step with missing gradient for parameter {index} ({name})")]
    MissingGradient { index: usize, name: String },

    #[error("normalization denominator underflow ({value:e}) in {op}")]
    Underflow { op: &'static str, value: f64 },

    #[error("dataset error in {path}: {detail}")]
    Dataset { path: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { op, detail: detail.into() }
    }

    pub fn dataset(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dataset { path: path.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code for the CLI: configuration problems are distinguishable
    /// from runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument { .. } => 2,
            _ => 1,
        }
    }
}
