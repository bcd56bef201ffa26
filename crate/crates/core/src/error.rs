use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data for {op}: need at least {needed}, got {got}")]
    InsufficientData {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate interval: cl_low equals cl_high ({0})")]
    DegenerateInterval(f64),

    #[error("degenerate weights: the fixed-effect weights describe a single effective study")]
    DegenerateWeights,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    RowValidation { row: usize, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("group {group:?}, {stage}: {source}")]
    Stage {
        group: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, group: &str, stage: &'static str) -> Self {
        Error::Stage {
            group: group.to_string(),
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for input validation, 3 for I/O, 4 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Internal(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
