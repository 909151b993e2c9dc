use thiserror::Error;

/// Failure categories surfaced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("config line {line}: key `{key}`: {reason}")]
    ConfigLine {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("index {index} out of range [{lo}, {hi})")]
    Bounds { index: i64, lo: i64, hi: i64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("energy {energy} outside admissible interval ({lo}, {hi})")]
    Domain { energy: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("phase {phi:.6} rad: {source}")]
    AtPhase {
        phi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this failure: 2 config, 3 numeric, 4 resource.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigLine { .. } => 2,
            Error::Bounds { .. }
            | Error::Dimension { .. }
            | Error::Domain { .. }
            | Error::Numeric(_) => 3,
            Error::Resource(_) | Error::Io(_) => 4,
            Error::AtPhase { source, .. } => source.exit_code(),
        }
    }
}
