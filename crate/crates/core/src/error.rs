use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parity: {0}")]
    InvalidParity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("field is not orthogonal to harmonic functions (residual {residual:e}, tolerance {tolerance:e})")]
    NotOrthogonal { residual: f64, tolerance: f64 },
    #[error("below threshold: {0}")]
    BelowThreshold(String),
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("density is not neutral (total charge {0})")]
    NotNeutral(i64),
    #[error("invalid square: {0}")]
    InvalidSquare(String),
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
