use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario file could not be read or parsed.
    #[error("scenario: {0}")]
    Scenario(String),

    /// Input data violates a structural requirement (ids, bounds, shapes).
    #[error("validation: {0}")]
    Validation(String),

    /// The market cannot be cleared: no dispatch satisfies the network
    /// constraints at the given demand.
    #[error("infeasible market: {0}")]
    Infeasible(String),

    /// The optimization objective is unbounded; indicates a modelling bug.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// A solver exceeded its iteration or node budget, or lost too much
    /// precision to certify a result.
    #[error("numerical: {0}")]
    Numerical(String),

    /// An operation was asked for something out of its supported range.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
