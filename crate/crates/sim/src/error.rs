use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] refshift_core::Error),

    #[error("scenario schema: {0}")]
    Schema(String),

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("scenario generator gave up after {attempts} attempts ({reason})")]
    Generator { attempts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }

    /// True for errors caused by the input files rather than by a solve.
    pub fn is_input(&self) -> bool {
        !matches!(self, SimError::Core(refshift_core::Error::Numerical(_)))
    }
}
