use thiserror::Error;

/// Errors surfaced by constructions and evaluators.
///
/// Evaluators distinguish recoverable refinement signals (a divisor interval
/// still straddles zero at the working precision) from hard usage errors
/// (dimension mismatch, derivative order exceeding the jet order, empty sets).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("set specification has no parts; the empty set has no total name")]
    EmptySet,

    #[error("derivative order {got} exceeds jet order {order}")]
    DerivOrderExceedsJet { got: u32, order: u32 },

    #[error("divisor interval straddles zero; refine inputs and retry")]
    DivisorStraddlesZero,

    #[error("square root of an interval that is entirely negative")]
    NegativeSqrt,

    #[error("point could not be certified outside the set within budget")]
    PointPossiblyInSet,

    #[error("operation needs a bounded set (or globally bounded data): {0}")]
    Unbounded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
