use std::path::PathBuf;

use thiserror::Error;

use crate::audio::wav::WavError;
use crate::model::weights::WeightsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: WavError,
    },

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("digital silence: {0} has RMS below the silence threshold")]
    Silence(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training: {0}")]
    Training(String),

    #[error("serialisation: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the inputs (files, datasets, arguments)
    /// rather than by a bug or an unexpected internal state.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Training(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
