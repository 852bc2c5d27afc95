use std::path::PathBuf;

/// Errors raised across the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invariant violated ({rule}){}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Invariant { rule: String, line: Option<u64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation unstable at hour {hour}: {message}")]
    Stability { hour: usize, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(rule: impl Into<String>) -> Self {
        Error::Invariant {
            rule: rule.into(),
            line: None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
