use std::path::PathBuf;

/// Errors raised by the model, filter, estimator and data layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, lengths or indices that do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// A non-finite or otherwise unusable number. `step` is the filter step
    /// when the failure happened inside a recursion.
    #[error("numeric error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { step: Option<usize>, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A malformed input record, located by file, line and column.
    #[error("{}:{line}: column `{column}`: {message}", file.display())]
    Schema {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            step: None,
            message: message.into(),
        }
    }

    pub(crate) fn numeric_at(step: usize, message: impl Into<String>) -> Self {
        Error::Numeric {
            step: Some(step),
            message: message.into(),
        }
    }

    /// Attaches a step index to a numeric error that does not have one yet.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numeric {
                step: None,
                message,
            } => Error::Numeric {
                step: Some(step),
                message,
            },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
