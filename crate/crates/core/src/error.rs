use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("odd bit length: {0}")]
    OddBitLength(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-power signal cannot carry a signal-to-noise ratio")]
    ZeroPowerSignal,

    #[error("OFDM expects {expected} per symbol, got {got}")]
    OfdmLength { expected: usize, got: usize },

    #[error("PA overdriven: |s| = {amplitude:.4} exceeds monotonic limit {limit:.4}")]
    PaOverdriven { amplitude: f64, limit: f64 },

    #[error("emitter id {0} does not fit the 8-bit header field")]
    EmitterIdRange(u32),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
