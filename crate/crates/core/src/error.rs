//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or combination of values.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A file could not be parsed. Carries enough position information to
    /// find the offending row.
    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    /// Inputs whose shapes do not line up (feature dimensions, lengths, bin
    /// counts).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation received an empty set it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Classifier training failed (non-finite loss, degenerate split, ...).
    #[error("training failed: {0}")]
    Training(String),

    /// A numerical procedure could not produce a meaningful result.
    #[error("algorithm failure: {0}")]
    Algorithm(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Prefix the message with where the error happened, keeping the
    /// category. Variants with structured payloads pass through unchanged.
    pub fn with_context(self, ctx: &str) -> Error {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("{ctx}: {m}")),
            Error::EmptyInput(m) => Error::EmptyInput(format!("{ctx}: {m}")),
            Error::Training(m) => Error::Training(format!("{ctx}: {m}")),
            Error::Algorithm(m) => Error::Algorithm(format!("{ctx}: {m}")),
            Error::Serialization(m) => Error::Serialization(format!("{ctx}: {m}")),
            other => other,
        }
    }

    /// Stable machine-readable category, used by the CLI for exit codes and
    /// error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::Training(_) => "training",
            Error::Algorithm(_) => "algorithm",
            Error::Io(_) => "io",
            Error::Serialization(_) => "serialization",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
