use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("path not found: {0}")]
    NotFound(PathBuf),

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: stage {value} outside [0, 4]")]
    StageRange { row: usize, value: String },

    #[error("row {row}, column {column}: cannot parse `{value}` as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: String },

    #[error("duplicate patient id `{0}`")]
    DuplicatePatient(String),

    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad MVOL magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported MVOL version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported MVOL dtype {0}")]
    UnsupportedDtype(u8),

    #[error("truncated MVOL payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config key `{0}` is not recognised")]
    UnknownConfigKey(String),

    #[error("config value for `{key}` out of range: {message}")]
    ConfigRange { key: String, message: String },

    #[error("missing modality: {0}")]
    MissingModality(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
