use std::path::PathBuf;

use thiserror::Error;

/// Failures of the std layer. Data problems map to exit code 1, everything
/// else to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dreamspace_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no manifest found in {}", .0.display())]
    NoManifest(PathBuf),

    #[error("{}: field `{field}`: {message}", path.display())]
    Malformed {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{}: corrupt mesh at byte {offset}: {message}", path.display())]
    CorruptMesh {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{}: unsupported mesh format", .0.display())]
    UnsupportedFormat(PathBuf),

    #[error("missing meshes for {} solution(s): {}", .0.len(), .0.join(", "))]
    MissingMeshes(Vec<String>),

    #[error("duplicate solution id {0}")]
    DuplicateId(String),

    #[error("{} invalid record(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidRecords(Vec<RecordViolation>),

    #[error("{0}")]
    Invalid(String),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input, 2 for environment or internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Internal(_) => 2,
            Error::Core(dreamspace_core::Error::Diverged { .. }) => 2,
            _ => 1,
        }
    }
}

/// One schema violation of one record.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RecordViolation {
    pub id: String,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for RecordViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.id, self.message)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
