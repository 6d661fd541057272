use thiserror::Error;

/// Errors raised by the toolkit.
///
/// A protocol `Abort` is not an error: it is a modeled outcome carried inside
/// transcripts and game results. `ProtocolViolation` is reserved for malformed
/// messages (wrong ack size, out-of-range index) so tests can tell the two apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("adversary contract violated: {0}")]
    AdversaryContract(String),

    #[error("constraint `{constraint}` violated (value {value:e})")]
    Constraint { constraint: &'static str, value: f64 },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("malformed record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
