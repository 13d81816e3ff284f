//! Error type shared across the crate, with a stable mapping to process
//! exit codes for the command-line frontend.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Array dimensions do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A dataset file could not be parsed; the location names the offending line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Input data is structurally valid but unusable (empty corpus, no
    /// positive candidate where one is required, and so on).
    #[error("data error: {0}")]
    Data(String),

    /// Bad configuration: unknown key, out-of-range value, missing argument.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint file is corrupt, truncated, or of an unsupported version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A numeric self-check failed (values were finite but wrong).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Prefixes the message with where the failure happened, keeping the
    /// variant (and so the exit code) intact.
    pub fn with_context(self, ctx: &str) -> Error {
        match self {
            Error::Shape(m) => Error::Shape(format!("{ctx}: {m}")),
            Error::NonFinite(m) => Error::NonFinite(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Checkpoint(m) => Error::Checkpoint(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            other => other,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
            Error::Shape(_) | Error::NonFinite(_) | Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
