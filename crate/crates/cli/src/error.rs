use std::path::PathBuf;

/// Errors surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error("run {run} seed {seed}: {source}")]
    Run {
        run: String,
        seed: u64,
        #[source]
        source: resist_core::Error,
    },
}

impl SimError {
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Config(_) => 2,
            SimError::Format(e) if e.is_io() => 3,
            SimError::Format(_) => 2,
            SimError::Io { .. } => 3,
            SimError::Run { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type SimResult<T> = Result<T, SimError>;
