use modelcaller_core::{Method, Role};

#[derive(Debug, thiserror::Error)]
pub enum McError {
    #[error("unknown caller `{0}`")]
    UnknownCaller(String),
    #[error("unknown registration `{0}`")]
    UnknownRegistration(String),
    #[error("unknown callable `{0}`")]
    UnknownCallable(String),
    #[error("unknown review token `{0}`")]
    UnknownToken(String),
    #[error("review token `{0}` has expired")]
    ExpiredToken(String),
    #[error("unknown collaboration request `{0}`")]
    UnknownRequest(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("role `{}` may not {}", role.as_str(), method.as_str())]
    Unauthorized { role: Role, method: Method },
    #[error("a caller named `{0}` already exists")]
    DuplicateName(String),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("registration would create a nesting cycle through `{0}`")]
    Cycle(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("no targets: {0}")]
    NoTargets(String),
    #[error("all sources failed: {0}")]
    AllFailed(String),
    #[error("not trainable: {0}")]
    NotTrainable(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] modelcaller_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed persisted state: {0}")]
    Format(String),
    #[error("unsupported format version {0}")]
    Version(u64),
    #[error("corrupt sample log at line {line}: {message}")]
    CorruptLine { line: usize, message: String },
}

impl McError {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            McError::UnknownCaller(_) => "unknown_caller",
            McError::UnknownRegistration(_) => "unknown_registration",
            McError::UnknownCallable(_) => "unknown_callable",
            McError::UnknownToken(_) => "unknown_token",
            McError::ExpiredToken(_) => "expired_token",
            McError::UnknownRequest(_) => "unknown_request",
            McError::UnknownFunction(_) => "unknown_function",
            McError::Unauthorized { .. } => "forbidden",
            McError::DuplicateName(_) => "duplicate_name",
            McError::SignatureMismatch(_) => "signature_mismatch",
            McError::Cycle(_) => "cycle",
            McError::Conflict(_) => "conflict",
            McError::NoTargets(_) => "no_targets",
            McError::AllFailed(_) => "all_failed",
            McError::NotTrainable(_) => "not_trainable",
            McError::EmptyDataset(_) => "empty_dataset",
            McError::Invalid(_) => "invalid",
            McError::Core(e) => match e {
                modelcaller_core::Error::InvalidSignature(_) => "invalid_signature",
                modelcaller_core::Error::NonConforming(_) => "non_conforming",
                modelcaller_core::Error::InvalidConfig(_) => "invalid_config",
                modelcaller_core::Error::Aggregation(_) => "aggregation",
                modelcaller_core::Error::Gating(_) => "gating",
                modelcaller_core::Error::Matching(_) => "matching",
                modelcaller_core::Error::Model(_) => "model",
                modelcaller_core::Error::Transition(_) => "transition",
            },
            McError::Io(_) => "io",
            McError::Format(_) => "format",
            McError::Version(_) => "version",
            McError::CorruptLine { .. } => "corrupt_line",
        }
    }
}

pub type Result<T, E = McError> = std::result::Result<T, E>;
