use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("no feasible completion of the missing data found after {0} attempts")]
    Infeasible(usize),

    #[error("all importance weights are zero: {0}")]
    ZeroWeights(String),

    #[error("information matrix is not invertible ({0}); increase the sample count or respecify the model")]
    SingularInformation(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::InvalidMove(_) => "invalid-move",
            Error::Infeasible(_) => "infeasible",
            Error::ZeroWeights(_) => "zero-weights",
            Error::SingularInformation(_) => "singular-information",
            Error::Sampling(_) => "sampling",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
