use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("transfer block A[{k},{l}] needs F_{order}, only F_1 and F_2 are nonzero")]
    UnsupportedBlock { k: usize, l: usize, order: isize },

    #[error("operator of dimension {dim} exceeds the configured cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("recovery node p = {p} is not strictly positive")]
    NonPositiveRecovery { p: f64 },

    #[error("divergence at step {step}: max magnitude {magnitude:e}")]
    Divergence { step: usize, magnitude: f64 },

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("sample times differ: candidate {candidate}, reference {reference}")]
    TimeMismatch { candidate: f64, reference: f64 },

    #[error("sample time {0} is not on the trajectory")]
    UnknownTime(f64),

    #[error("non-positive value {value} in log-log fit sample {index}")]
    NonPositiveSample { index: usize, value: f64 },
}
