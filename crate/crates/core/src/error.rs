use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing vector for `{0}`")]
    MissingVector(String),

    #[error("undefined (zero variance): {0}")]
    ZeroVariance(String),

    #[error("rank-deficient design: collinear terms {0:?}")]
    RankDeficient(Vec<String>),

    #[error("training split has a single class: {0}")]
    SingleClass(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable category used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::InvalidInput(_) => "invalid_input",
            Error::MissingVector(_) => "missing_vector",
            Error::ZeroVariance(_) => "zero_variance",
            Error::RankDeficient(_) => "rank_deficient",
            Error::SingleClass(_) => "single_class",
            Error::Config(_) => "config",
        }
    }
}
