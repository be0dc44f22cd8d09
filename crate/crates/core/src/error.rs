use thiserror::Error;

use crate::dyadic::DyadicInterval;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("the root interval has no {0}")]
    RootBoundary(&'static str),

    #[error("ancestor generation {requested} exceeds level {level}")]
    AncestorOutOfRange { requested: u32, level: u32 },

    #[error("interval {interval} exceeds the depth bound {bound}")]
    DepthExceeded { interval: DyadicInterval, bound: u32 },

    #[error("interval index would overflow the 128-bit position space")]
    IndexOverflow,

    #[error("invalid interval literal {0:?}")]
    BadIntervalLiteral(String),

    #[error("shift coefficients must satisfy |alpha| <= 1, got {0}")]
    AlphaOutOfRange(f64),

    #[error("cells do not form a partition of the root interval: {0}")]
    BadPartition(String),

    #[error("weight must be strictly positive, found {0} on a cell")]
    NonPositiveWeight(f64),

    #[error("measure specification rejected: {0}")]
    BadMeasureSpec(String),

    #[error("decomposition precondition violated: {0}")]
    BadDecomposition(String),

    #[error("function support too close to the root: need {needed} ancestor generations above level {level}")]
    SupportTooShallow { level: u32, needed: u32 },

    #[error("sparse family witness is missing or degenerate")]
    MissingWitness,

    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
