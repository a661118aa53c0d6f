use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("config error: missing required key `{0}`")]
    MissingKey(String),

    /// An artifact that an earlier stage should have produced is absent.
    #[error("missing {} (run `metapop {stage}` first)", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error(transparent)]
    Core(#[from] metapop_core::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use metapop_core::Error as E;
        match self {
            CliError::Config(_) | CliError::MissingKey(_) => 2,
            CliError::MissingStage { .. } => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Schema { .. } | E::Structural(_) | E::Csv { .. } | E::Json(_) => 2,
                E::Numeric { .. } | E::Estimation(_) => 4,
                E::Io { .. } => 1,
            },
            CliError::Io { .. } => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("malformed CSV: {e}"))
    }
}
