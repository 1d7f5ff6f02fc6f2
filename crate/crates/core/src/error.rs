use thiserror::Error;

use crate::event_model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid stream: {0}")]
    InvalidStream(Violation),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("events out of order at line {line} (t={t} after t={prev})")]
    Order { line: usize, t: u64, prev: u64 },

    #[error("bad magic: expected \"EVS1\\n\"")]
    BadMagic,

    #[error("unsupported EVS1 version {0}")]
    BadVersion(u8),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("event {index}: coordinate ({x}, {y}) outside {width}x{height} sensor")]
    CoordinateOutOfRange {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },

    #[error("event {index}: invalid polarity byte {value}")]
    BadPolarity { index: usize, value: u8 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image too small: {width}x{height}, need at least 16x16")]
    ImageTooSmall { width: usize, height: usize },

    #[error("frequency {freq_hz} Hz outside allowed range {range}")]
    FrequencyOutOfRange { freq_hz: f64, range: String },

    #[error("displacement undefined: {0}")]
    DegenerateFrame(String),

    #[error("image format: {0}")]
    ImageFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
