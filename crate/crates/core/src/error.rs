use thiserror::Error;

/// Errors raised by estimation, identification and sampling routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("treatment arm t={0} has no observations")]
    EmptyArm(usize),
    #[error("conditioning event has zero probability: {0}")]
    ZeroConditioning(String),
    #[error("rank deficient system: {0}")]
    RankDeficient(String),
    #[error("model incompatible with data: {0}")]
    ModelIncompatible(String),
    #[error("identification condition violated: {0}")]
    ConditionViolated(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("failed to converge: {0}")]
    NonConvergence(String),
    #[error("too few draws for a summary: {0} (need at least {1})")]
    TooFewDraws(usize, usize),
}

/// Coarse grouping used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    ModelIncompatible,
    NonConvergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RankDeficient(_) | Error::ModelIncompatible(_) | Error::ConditionViolated(_) => {
                ErrorClass::ModelIncompatible
            }
            Error::NonConvergence(_) => ErrorClass::NonConvergence,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
