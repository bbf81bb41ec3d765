use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("effective rank undefined at k = {k}: eigenvalue {index} is zero", index = k + 1)]
    UndefinedRank { k: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular Gram matrix (condition number {condition:.3e} > {limit:.1e}); offending rows {rows:?}")]
    SingularGram {
        condition: f64,
        limit: f64,
        rows: Vec<usize>,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("unknown series `{0}` requested for plot")]
    MissingSeries(String),

    #[error("config parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularGram { .. } | Error::UndefinedRank { .. } => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
