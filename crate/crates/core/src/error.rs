// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors raised by the sampler, the decoders and the IO layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} at index {index} is outside the support of the {family} family")]
    Domain {
        family: &'static str,
        index: usize,
        value: f64,
    },

    #[error("uniformization rate {lambda} does not dominate rate {rate} at index {index}")]
    RateNotDominated { index: usize, rate: f64, lambda: f64 },

    #[error("intensity {value} exceeds bound {bound} on piece {piece}")]
    IntensityExceedsBound { piece: usize, value: f64, bound: f64 },

    #[error("uniform grid has {count} points, cap is {cap} (rates: {rates:?})")]
    GridCapExceeded {
        count: usize,
        cap: usize,
        rates: Vec<f64>,
    },

    #[error("filtering probabilities underflowed at step {step}")]
    FilterUnderflow { step: usize },

    #[error("index error: {0}")]
    Index(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("emission density is zero for every state at observation {index}")]
    ZeroEmission { index: usize },

    #[error("empty archive")]
    EmptyArchive,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
