use thiserror::Error;

/// Errors surfaced by simulator, optimizer and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("genotype must have {expected} genes, got {actual}")]
    GenotypeLength { expected: usize, actual: usize },

    #[error("gene {index} is {value}, outside [{lo}, {hi}]")]
    GeneOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("could not place {placed} of {requested} robots without overlap after {attempts} attempts")]
    SpawnFailure {
        requested: usize,
        placed: usize,
        attempts: usize,
    },

    #[error("individual at index {0} has no fitness; selection requires evaluated individuals")]
    Unevaluated(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
