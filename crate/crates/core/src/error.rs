use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid digit {digit} for radix {radix}")]
    InvalidDigit { digit: u64, radix: u32 },

    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),

    #[error("divergent series: reflectance {0} must be below 1")]
    DivergentSeries(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("challenge space exhausted: {0}")]
    ExhaustedDomain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at step {step}")]
    Divergence { step: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
