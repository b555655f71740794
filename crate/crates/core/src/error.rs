use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by encoding, estimation and clustering.
///
/// Out-of-range errors name the offending attribute but never carry the value
/// itself, so they can be logged without leaking custodian data.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value of attribute {attribute} lies outside [{lower}, {upper}]")]
    OutOfRange {
        attribute: usize,
        lower: f64,
        upper: f64,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("incompatible encodings: {0}")]
    IncompatibleEncoding(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cluster is empty")]
    EmptyCluster,

    #[error("exact enumeration of 2^{s} outputs exceeds the limit of 2^{limit}")]
    EnumerationTooLarge { s: usize, limit: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
