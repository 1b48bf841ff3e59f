use std::path::{Path, PathBuf};

/// Failures surfaced to the shell. Each variant maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or unreadable-as-config input; exit 2.
    #[error("{0}")]
    Config(String),
    /// Filesystem failure; exit 3.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A theory check reported violations; exit 1.
    #[error("theory check failed: {}", .0.join(", "))]
    CheckFailed(Vec<String>),
    /// Any other failure from the training library; exit 1.
    #[error(transparent)]
    Core(cfpo_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub const EXIT_OK: i32 = 0;
    pub const EXIT_FAILURE: i32 = 1;
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_IO: i32 = 3;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Io { .. } => Self::EXIT_IO,
            CliError::CheckFailed(_) | CliError::Core(_) => Self::EXIT_FAILURE,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<cfpo_core::Error> for CliError {
    fn from(e: cfpo_core::Error) -> Self {
        use cfpo_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Io { path, source } => CliError::Io { path, source },
            other => CliError::Core(other),
        }
    }
}
