use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeError {
    #[error("parameter digest mismatch: operand was produced under different parameters (expected {expected}, got {got})")]
    ParamsMismatch { expected: String, got: String },

    #[error("vector of length {len} exceeds the {slots} available slots")]
    VectorTooLong { len: usize, slots: usize },

    #[error("scale {got} does not match required scale {expected}")]
    ScaleMismatch { expected: f64, got: f64 },

    #[error("operand levels differ ({a} vs {b})")]
    LevelMismatch { a: usize, b: usize },

    #[error("modulus chain exhausted: operation requires level >= 1, ciphertext is at level 0")]
    LevelExhausted,

    #[error("no rotation key available for step {step}")]
    MissingRotationKey { step: usize },

    #[error("operation requires secure parameters; {0}")]
    InsecureParams(String),

    #[error("plaintext value {value} out of range [0, {plain_modulus})")]
    ValueOutOfRange { value: u64, plain_modulus: u64 },

    #[error("decryption failed: noise budget exhausted")]
    NoiseBudgetExhausted,

    #[error("key bundle is missing the {0} component")]
    MissingKeyComponent(&'static str),

    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic: not an HEF1 frame")]
    BadMagic,

    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },

    #[error("frame params digest does not match the supplied parameters")]
    ParamsDigestMismatch,

    #[error("frame holds a {got} where a {expected} was expected")]
    WrongKind { expected: &'static str, got: &'static str },

    #[error("malformed frame: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, HeError>;
