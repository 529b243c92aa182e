//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix with zero rows or zero columns.
    EmptyMatrix,
    /// Data length does not match `rows * cols`.
    DataLengthMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    /// A non-finite element at (row, col).
    NonFinite { row: usize, col: usize },
    /// Two operands disagree on a dimension.
    DimensionMismatch {
        expected: usize,
        got: usize,
        what: &'static str,
    },
    /// Token count differs from embedding row count.
    CountMismatch { tokens: usize, rows: usize },
    /// The same token appears twice; positions are 1-based.
    DuplicateToken {
        token: String,
        first: usize,
        second: usize,
    },
    /// An empty token string (would match nothing or loop forever).
    EmptyToken { position: usize },
    /// Von Neumann entropy of an all-zero embedding set is undefined.
    ZeroMatrix,
    /// The eigensolver failed to converge (should not happen for symmetric input).
    NoConvergence,
    /// An RLE string contains a byte outside the 48..=111 alphabet.
    RleMalformedChar { byte: u8, position: usize },
    /// Decoded run counts are negative or do not sum to `h * w`.
    RleLengthMismatch { expected: usize, got: i64 },
    /// A bounding box with `x1 > x2` or `y1 > y2` after clamping.
    InvalidBBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    /// A patch index at or beyond the grid's patch count.
    PatchIndexOutOfRange { index: usize, patches: usize },
    /// Mask dimensions do not match what the operation expects.
    MaskSizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A label segment that no vocabulary token matches.
    UntokenizableSegment {
        label: String,
        word: String,
        offset: usize,
    },
    /// A vector with zero norm where a direction is required.
    ZeroNorm { what: &'static str },
    /// A threshold parameter outside its valid range.
    InvalidThreshold { what: &'static str },
    /// No object in the record could be evaluated.
    NoEvaluableObjects,
    /// More distinct atoms requested than the dictionary holds.
    KExceedsVocab { k: usize, vocab: usize },
    /// A configuration field outside its valid range.
    InvalidConfig { what: &'static str },
    /// A schedule queried outside `0..total`.
    StepOutOfRange { step: usize, total: usize },
    /// Training produced a non-finite loss; the last finite step is reported.
    Diverged { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyMatrix => write!(f, "matrix has zero rows or columns"),
            Error::DataLengthMismatch { rows, cols, len } => {
                write!(f, "data length {len} does not match {rows}x{cols}")
            }
            Error::NonFinite { row, col } => {
                write!(f, "non-finite element at ({row}, {col})")
            }
            Error::DimensionMismatch {
                expected,
                got,
                what,
            } => {
                write!(f, "{what}: expected dimension {expected}, got {got}")
            }
            Error::CountMismatch { tokens, rows } => {
                write!(f, "{tokens} tokens but {rows} embedding rows")
            }
            Error::DuplicateToken {
                token,
                first,
                second,
            } => {
                write!(
                    f,
                    "duplicate token {token:?} at positions {first} and {second}"
                )
            }
            Error::EmptyToken { position } => {
                write!(f, "empty token at position {position}")
            }
            Error::ZeroMatrix => write!(f, "all-zero embedding set has no spectrum"),
            Error::NoConvergence => write!(f, "eigensolver did not converge"),
            Error::RleMalformedChar { byte, position } => {
                write!(f, "RLE byte {byte} at offset {position} outside 48..=111")
            }
            Error::RleLengthMismatch { expected, got } => {
                write!(f, "RLE runs cover {got} pixels, mask has {expected}")
            }
            Error::InvalidBBox { x1, y1, x2, y2 } => {
                write!(f, "inverted bbox ({x1}, {y1}, {x2}, {y2})")
            }
            Error::PatchIndexOutOfRange { index, patches } => {
                write!(f, "patch index {index} out of range for {patches} patches")
            }
            Error::MaskSizeMismatch { expected, got } => {
                write!(
                    f,
                    "mask size {}x{} does not match expected {}x{}",
                    got.0, got.1, expected.0, expected.1
                )
            }
            Error::UntokenizableSegment {
                label,
                word,
                offset,
            } => {
                write!(
                    f,
                    "label {label:?}: no vocab token matches {word:?} at byte {offset}"
                )
            }
            Error::ZeroNorm { what } => write!(f, "{what} has zero norm"),
            Error::InvalidThreshold { what } => write!(f, "invalid threshold parameter: {what}"),
            Error::NoEvaluableObjects => write!(f, "no evaluable objects"),
            Error::KExceedsVocab { k, vocab } => {
                write!(f, "{k} distinct atoms requested, dictionary has {vocab}")
            }
            Error::InvalidConfig { what } => write!(f, "invalid config: {what}"),
            Error::StepOutOfRange { step, total } => {
                write!(f, "step {step} outside schedule of {total} steps")
            }
            Error::Diverged { step } => {
                write!(f, "training diverged (non-finite loss) at step {step}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
