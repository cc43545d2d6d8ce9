use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("LFSR degree {0} outside supported range 3..=16")]
    UnsupportedDegree(u32),

    #[error("invalid tap set {taps:?} for degree {degree}")]
    InvalidTaps { degree: u32, taps: Vec<u32> },

    #[error("LFSR register fill must be nonzero")]
    ZeroSeed,

    #[error("taps {taps:?} are not primitive for degree {degree}: period {period}, expected {expected}")]
    NonPrimitive {
        degree: u32,
        taps: Vec<u32>,
        period: usize,
        expected: usize,
    },

    #[error(
        "not a preferred pair for degree {degree}: cross-correlation {value} at shift {shift} outside {allowed:?}"
    )]
    NotPreferredPair {
        degree: u32,
        value: i64,
        shift: usize,
        allowed: [i64; 3],
    },

    #[error("no preferred pair is known for degree {0}")]
    NoDefaultPair(u32),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("despreader weights are all zero")]
    DegenerateWeights,

    #[error("no detection records to evaluate")]
    EmptyRecords,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
