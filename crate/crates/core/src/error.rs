use std::io;

use thiserror::Error;

/// Invalid knob or geometry settings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("value width {0} is not one of 8, 16, 32, 64")]
    ValueWidth(u32),
    #[error("{bits} bits per value does not fit a {width}-bit value")]
    BitsPerValue { bits: u32, width: u32 },
    #[error("truncation ({trunc}) and tolerance ({tol}) overlap inside a {width}-bit value")]
    MaskOverlap { trunc: u32, tol: u32, width: u32 },
    #[error("similarity limit {0} exceeds 64 bits")]
    SimilarityBits(u32),
    #[error("unknown similarity preset {0}% (expected 90, 80, 75 or 70)")]
    SimilarityPreset(u32),
    #[error("table capacity {0} outside 1..=64")]
    TableCapacity(usize),
    #[error("float32 tolerance requires 32-bit values, got {0}")]
    Float32Width(u32),
    #[error("{total} truncated bits per word do not divide evenly into {width}-bit values")]
    TruncationTotal { total: u32, width: u32 },
    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
}

/// Frame-level faults seen by a decoder. All of them mean the two ends of the
/// channel no longer agree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("one-hot index {0} out of range 0..64")]
    SlotOutOfRange(usize),
    #[error("malformed one-hot payload {0:#018x}: expected exactly one set bit")]
    MalformedOneHot(u64),
    #[error("table index {index} beyond occupancy {occupancy}")]
    Desync { index: usize, occupancy: usize },
    #[error("{scheme} decoder cannot accept a {frame} frame")]
    UnexpectedFrame { scheme: &'static str, frame: &'static str },
    #[error("encoded frame carries no table index")]
    MissingIndex,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("image decode: {0}")]
    Image(String),
    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),
    #[error("bad trace magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported trace version {0}")]
    Version(u16),
    #[error("trace format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("payload holds {actual} bytes but metadata expects {expected}")]
    ByteCount { expected: usize, actual: usize },
    #[error("stream kind {0} cannot be converted this way")]
    WrongKind(&'static str),
}

impl TraceError {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        TraceError::Format {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualityError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    Dimensions((usize, usize, usize), (usize, usize, usize)),
    #[error("empty frame log")]
    EmptyLog,
    #[error("image has no pixels")]
    EmptyImage,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
