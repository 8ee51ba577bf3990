use alloc::string::String;

/// Errors raised by the arithmetic layer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    #[error("{value} is not a whole number of units at resolution {resolution}")]
    NonRepresentable { value: String, resolution: String },
    #[error("negative water amount {0}")]
    Negative(String),
    #[error("malformed rational `{0}`")]
    ParseRational(String),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("resolution must be a positive even integer, got {0}")]
    InvalidResolution(String),
}
