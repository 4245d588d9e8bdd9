use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BiaError {
    /// Caller supplied arguments outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The feasibility condition `sum(s) <= (K+1) * min(s)` does not hold.
    #[error("feasibility condition violated: {0}")]
    ConditionViolated(String),
    /// An enumeration would exceed its configured budget.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    /// A postcondition that should hold by construction failed.
    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, BiaError>;

pub(crate) fn invalid(msg: impl Into<String>) -> BiaError {
    BiaError::InvalidInput(msg.into())
}
