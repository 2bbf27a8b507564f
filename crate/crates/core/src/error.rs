use alloc::string::String;

/// Errors raised by the pure algorithms of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
    #[error("record does not conform: {0}")]
    NonConforming(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("aggregation failed: {0}")]
    Aggregation(String),
    #[error("gating failed: {0}")]
    Gating(String),
    #[error("output mismatch: {0}")]
    Matching(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid transition: {0}")]
    Transition(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
