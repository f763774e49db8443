use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum RpcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The intersection block of the initial CUR has no usable singular values.
    #[error("singular initialization: intersection matrix has numerical rank {rank}, need {required}")]
    SingularInitialization { rank: usize, required: usize },

    #[error("singular intersection: numerical rank {rank}, need {required}")]
    SingularIntersection { rank: usize, required: usize },

    #[error("solver step {iteration} failed: {source}")]
    StepFailure {
        iteration: usize,
        #[source]
        source: Box<RpcaError>,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Malformed file content. `context` names the file (or the stream being
    /// decoded); `offset` is a byte offset or a 1-based line number as given
    /// in `message`.
    #[error("format error in {context}{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        context: String,
        offset: Option<u64>,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RpcaError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RpcaError::InvalidArgument(msg.into()))
}

impl RpcaError {
    pub(crate) fn format(context: impl Into<String>, offset: Option<u64>, message: impl Into<String>) -> Self {
        RpcaError::Format {
            context: context.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RpcaError::Io {
            path: path.into(),
            source,
        }
    }

    /// Re-labels a format error with a file path as context.
    pub(crate) fn with_context(self, context: impl Into<String>) -> Self {
        match self {
            RpcaError::Format { offset, message, .. } => RpcaError::Format {
                context: context.into(),
                offset,
                message,
            },
            other => other,
        }
    }
}
