use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("p = {0} is not an odd prime")]
    InvalidPrime(u64),
    #[error("invalid precision: {0}")]
    InvalidPrecision(String),
    #[error("precision exhausted: {0}")]
    Precision(String),
    #[error("constant coefficient is not a unit")]
    UnitExpected,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("submodule is not contained in the ambient module")]
    Containment,
    #[error("submodule is not saturated: {0}")]
    NotSaturated(String),
    #[error("A·B = E^{height}·I has no solution over the truncated ring")]
    NotFiniteHeight { height: u32 },
    #[error("conjugate layer {index} is not free: {detail}")]
    FreenessViolation { index: usize, detail: String },
    #[error("uncertified precision: {0}")]
    UncertifiedPrecision(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fixed-point iteration did not stabilise after {0} steps")]
    ConnectionDiverged(usize),
    #[error("connection leaves the filtration at index {index}: {detail}")]
    GriffithsViolation { index: usize, detail: String },
    #[error("induced derivation on layer {index} depends on the chosen lift")]
    WellDefinednessFailure { index: usize },
    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
