use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed file content. `offset` is a byte offset for binary formats
    /// and a line number for text formats.
    #[error("{}: {kind} {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        kind: &'static str,
        offset: u64,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] nfps_core::Error),
}

/// Process exit codes by failure class.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use nfps_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Parse { .. } => exit::IO,
            CliError::Core(E::InvalidConfig(_) | E::Dimension { .. } | E::InvalidDepth(_)) => exit::CONFIG,
            CliError::Core(_) => exit::NUMERICAL,
        }
    }
}

/// Attaches a path to IO errors.
pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}
