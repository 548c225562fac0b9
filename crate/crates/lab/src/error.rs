use std::path::PathBuf;

/// Errors of the lab crate.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] amem_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged at epoch {epoch}, dialog {dialog}: loss {loss}; last good checkpoint: {last_good:?}")]
    Divergence {
        epoch: usize,
        dialog: usize,
        loss: f64,
        last_good: Option<PathBuf>,
    },
    #[error("gradient check failed for {}", failing.join(", "))]
    GradCheck { failing: Vec<String> },
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        LabError::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Core(amem_core::Error::Usage(_)) => 2,
            _ => 1,
        }
    }
}
