use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structural error at line {line}: {message}")]
    Structure { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("window {0} is entirely missing")]
    AllMissing(u64),

    #[error("duplicate window id {0}")]
    DuplicateId(u64),

    #[error("unknown cluster {0}")]
    UnknownCluster(u32),

    #[error("missing artifact {path} (run the `{stage}` stage first)")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("corrupt store {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error("journal conflict: expected revision {expected}, found {found}")]
    Conflict { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Structure { .. } => "structure",
            Error::Config(_) => "config",
            Error::Invalid(_) => "invalid",
            Error::AllMissing(_) => "all_missing",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownCluster(_) => "unknown_cluster",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Store { .. } => "store",
            Error::Conflict { .. } => "conflict",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
