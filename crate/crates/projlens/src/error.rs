//! Error type for the IO and CLI layer.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] projlens_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{path}: not an NPY file (bad magic bytes)")]
    BadMagic { path: PathBuf },

    #[error("{path}: NPY version {major}.{minor} not supported (need 1.0)")]
    UnsupportedVersion { path: PathBuf, major: u8, minor: u8 },

    #[error("{path}: dtype {descr:?} not supported (need little-endian '<f4' or '<f8')")]
    UnsupportedDtype { path: PathBuf, descr: String },

    #[error("{path}: array has {ndim} dimension(s), need exactly 2")]
    NotTwoDimensional { path: PathBuf, ndim: usize },

    #[error("{path}: malformed NPY header: {what}")]
    MalformedHeader { path: PathBuf, what: String },

    #[error("{path}: payload holds {found} bytes, header promises {expected}")]
    PayloadMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: record {index} ({image_id}): {message}")]
    BadRecord {
        path: PathBuf,
        index: usize,
        image_id: String,
        message: String,
    },

    #[error("{0}")]
    InvalidFlag(String),

    #[error("{path}: {what}")]
    BadInput { path: PathBuf, what: String },

    #[error("training diverged at step {step}; last finite checkpoint written")]
    Diverged { step: usize },

    #[error("no record in the annotation file could be evaluated")]
    NoEvaluableRecords,
}

impl CliError {
    /// Stable machine-readable category for the stderr JSON line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(_) => "core",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::BadMagic { .. } => "bad_magic",
            CliError::UnsupportedVersion { .. } => "unsupported_version",
            CliError::UnsupportedDtype { .. } => "unsupported_dtype",
            CliError::NotTwoDimensional { .. } => "not_two_dimensional",
            CliError::MalformedHeader { .. } => "malformed_header",
            CliError::PayloadMismatch { .. } => "payload_mismatch",
            CliError::BadRecord { .. } => "bad_record",
            CliError::InvalidFlag(_) => "invalid_flag",
            CliError::BadInput { .. } => "bad_input",
            CliError::Diverged { .. } => "diverged",
            CliError::NoEvaluableRecords => "no_evaluable_records",
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
