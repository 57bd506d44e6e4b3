use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unparseable or invalid run configuration.
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("summary json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] spgd::Error),
    /// A finite final state whose metrics still overflowed.
    #[error("{metric} is {value}; the guidance step size is far too large")]
    NonFiniteMetric { metric: &'static str, value: f64 },
    /// Every seed of a batch failed.
    #[error("all {0} seeds failed")]
    AllSeedsFailed(usize),
}

impl HarnessError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
