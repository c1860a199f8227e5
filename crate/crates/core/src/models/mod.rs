//! Mobility laws and validation statistics.

mod gravity;
mod power_law;
mod regression;

pub use gravity::{
    capital_distances, fit_gravity, fit_gravity_pairs, read_capitals, DistanceMatrix, GravityFit, GravityPair,
    GravityStderr, DEFAULT_MIN_DISTANCE_KM,
};
pub use power_law::{
    fit_power_law, fit_power_law_truncated, log_binned_fit, LogBinnedFit, PowerLawFit, DEFAULT_DISPLACEMENT_XMIN_KM,
};
pub use regression::{
    loglog_regression, ols, read_reference, validate_external, ExternalValidation, LogLogFit, OlsFit, ReferenceEntry,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("degenerate tail: all samples equal xmin")]
    DegenerateTail,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("values must be positive and finite: {0}")]
    NonPositive(String),
    #[error("degenerate design: regressors are collinear")]
    DegenerateDesign,
    #[error("need at least 5 country pairs, got {0}")]
    TooFewPairs(usize),
    #[error("need at least 3 matched countries, got {0}")]
    TooFewMatches(usize),
    #[error("x and y differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no solution with exponent > 1 (tail is flatter than log-uniform)")]
    NoSolution,
    #[error("table: {0}")]
    Table(String),
}
