use thiserror::Error;

/// Errors produced by the distribution, sampling, set-probability and
/// estimator routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("logits must be finite and non-empty")]
    InvalidLogits,
    #[error("element {0} is part of the excluded set")]
    InvalidRestriction(usize),
    #[error("excluded set carries all probability mass")]
    DegenerateRestriction,
    #[error("distribution has no logit parameterization")]
    NoParameterization,
    #[error("domain of size {size} exceeds the enumeration cap {cap}")]
    DomainTooLarge { size: u128, cap: usize },
    #[error("sample size {k} is invalid for a domain of size {n}")]
    InvalidSampleSize { k: usize, n: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("naive set probability needs {k}! orderings (limit {limit})")]
    TooManyPermutations { k: usize, limit: usize },
    #[error("inclusion-exclusion needs 2^{k} subsets (limit 2^{limit})")]
    TooManySubsets { k: usize, limit: usize },
    #[error("split m={m} must satisfy 1 <= m < k={k}")]
    InvalidSplit { m: usize, k: usize },
    #[error("threshold is not below every retained perturbed log-probability")]
    InconsistentThreshold,
    #[error("estimator needs at least two samples")]
    NeedTwoSamples,
    #[error("objective has no pathwise parameter gradient")]
    NoPathwiseGradient,
    #[error("baseline sample size {baseline} differs from sample size {samples}")]
    BaselineSizeMismatch { samples: usize, baseline: usize },
    #[error("sample space of size {size} exceeds the enumeration cap {cap}")]
    SpaceTooLarge { size: u128, cap: usize },
    #[error("objective values must be finite")]
    InvalidObjective,
    #[error("estimator {kind} does not accept this draw")]
    DrawMismatch { kind: String },
    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
