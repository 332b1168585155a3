use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] kgsub_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: file not found", .0.display())]
    MissingInput(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite loss at step {step} (learning rate {learning_rate}); last batch example ids: {batch:?}")]
    NonFiniteLoss { step: u64, learning_rate: f64, batch: Vec<usize> },
    #[error("{0}")]
    CheckFailed(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }

    /// Process exit code: 1 internal, 2 usage or config, 3 artifact mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingInput(_) | Error::Parse { .. } | Error::Config(_) => 2,
            Error::Mismatch(_) => 3,
            _ => 1,
        }
    }
}
