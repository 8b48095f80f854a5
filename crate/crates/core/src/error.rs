use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the rig, splat, body and refinement modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate axis: {0}")]
    DegenerateAxis(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    Length { expected: usize, found: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported SH degree {0} (supported: 0..=3)")]
    UnsupportedShDegree(usize),

    #[error("mixed SH degrees in concatenation: {0} vs {1}")]
    MixedShDegree(usize, usize),

    #[error("empty point set")]
    EmptySet,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

impl Error {
    /// Process exit status for this failure class: 2 config, 3 missing
    /// file, 4 schema or format, 5 degenerate geometry, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingFile(_) => 3,
            Error::Format(_)
            | Error::Length { .. }
            | Error::Schema(_)
            | Error::UnsupportedShDegree(_)
            | Error::MixedShDegree(..)
            | Error::NonFinite(_)
            | Error::Json { .. } => 4,
            Error::DegenerateAxis(_) | Error::DegenerateConfiguration(_) | Error::EmptySet => 5,
            Error::Io { .. } => 1,
        }
    }
}
