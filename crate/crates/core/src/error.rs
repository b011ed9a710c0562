use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("query must have at least one coefficient")]
    EmptyQuery,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("noise variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("pricing level must be positive and finite, got {0}")]
    NonPositivePricingLevel(f64),
    #[error("index {index} out of range for query of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("exponent p = {0} is outside the allowed interval (1/2, 1]")]
    InvalidExponent(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("no value intensity registered for this query")]
    MissingIntensity,
    #[error("value intensity undefined: {0}")]
    IntensityDomain(&'static str),
    #[error("pricing threshold undefined when Gamma(q) = 0")]
    ZeroThreshold,
    #[error("query has zero semi-norm")]
    ZeroNorm,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("grid lower bound {lo} is below sigma_min = {sigma_min}")]
    GridBelowSigmaMin { lo: f64, sigma_min: f64 },
    #[error("bundle must contain at least one query")]
    EmptyBundle,
    #[error("witness does not certify linear answerability")]
    NotAnswerable,
    #[error("answerability witness must have a nonzero coefficient")]
    ZeroWitness,
}
