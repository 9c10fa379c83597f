use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0} (must be at least 1)")]
    InvalidDimension(usize),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("sampling radius must be positive and finite, got {0}")]
    InvalidRadius(f64),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("invalid scope mask: {0}")]
    InvalidMask(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    /// The aggregated measurement vector is identically zero.
    #[error("degenerate measurements: sum of signed directions is zero")]
    DegenerateMeasurement,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("token {token} outside vocabulary of size {vocab}")]
    Vocabulary { token: usize, vocab: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing required config fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),

    #[error("config field `{field}` = {value} out of range {bounds}")]
    OutOfRange {
        field: String,
        value: String,
        bounds: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("dataset generation failed: {0}")]
    DatasetGeneration(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
