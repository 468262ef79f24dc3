use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear program was assembled inconsistently.
    #[error("malformed linear program: {0}")]
    MalformedProgram(String),

    /// Eve's gain-matching program has no solution at any tolerance level.
    #[error("no forwarding policy matches the normal channel: {0}")]
    AttackInfeasible(String),

    /// A closed-form estimator hit a vanishing denominator.
    #[error("degenerate estimator: {0}")]
    Degenerate(String),

    /// The intensity search grid contains no admissible point.
    #[error("empty intensity grid: {0}")]
    EmptyGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
