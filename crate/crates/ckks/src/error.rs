use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("vector of length {len} exceeds the {slots} available slots")]
    TooManyValues { len: usize, slots: usize },
    #[error("non-finite value at slot {0}")]
    NonFinite(usize),
    #[error("encoded coefficient overflows 63 bits; lower the scale")]
    ScaleOverflow,
    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(f64, f64),
    #[error("level {level} is outside the modulus chain (top level {top})")]
    LevelOutOfRange { level: usize, top: usize },
    #[error("no level left to rescale into")]
    NoLevelLeft,
    #[error("ciphertext has {0} parts; relinearize before this operation")]
    NotRelinearized(usize),
    #[error("relinearization key missing")]
    MissingRelinKey,
    #[error("missing Galois key for rotation step {0}")]
    MissingGaloisKey(usize),
    #[error("rotation step {step} outside [1, {max}]")]
    InvalidRotationStep { step: i64, max: usize },
    #[error("malformed object: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, CkksError>;
