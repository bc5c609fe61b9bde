use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("encoding collision: objects {first} and {second} share cell ({i}, {j})")]
    Collision {
        first: usize,
        second: usize,
        i: usize,
        j: usize,
    },

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("generation error (seed {seed}): {message}")]
    Generation { seed: u64, message: String },

    #[error("ambiguous instruction: {0}")]
    Ambiguous(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag used as the machine-parsable prefix of CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::EmptyInput(_) => "empty",
            Error::NonFinite(_) => "nonfinite",
            Error::Range(_) => "range",
            Error::Collision { .. } => "collision",
            Error::MissingGrad(_) => "grad",
            Error::Config(_) => "config",
            Error::Generation { .. } => "generation",
            Error::Ambiguous(_) => "ambiguous",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
