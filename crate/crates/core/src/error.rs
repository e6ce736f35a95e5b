use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("metapopulation has no zones")]
    EmptyMetapopulation,
    #[error("duplicate zone id `{0}`")]
    DuplicateZone(String),
    #[error("zone `{zone}` has non-positive population {population}")]
    NonPositivePopulation { zone: String, population: f64 },
    #[error("invalid outbreak series: {0}")]
    InvalidSeries(String),
    #[error("zone {zone} is exhausted on day {day}: no susceptible individuals left")]
    ExhaustedPopulation { zone: usize, day: usize },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid infection network: {0}")]
    InvalidNetwork(String),
    #[error("invalid mobility volumes: {0}")]
    InvalidMobility(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zone `{0}` has no centroid")]
    MissingCentroid(String),
    #[error("zones `{0}` and `{1}` have coincident centroids")]
    DegenerateDistance(String, String),
    #[error("feature `{0}` has a negative or non-finite entry")]
    NegativeFeature(String),
    #[error("feature `{0}` is identically zero")]
    DegenerateFeature(String),
    #[error("model requires a feature tensor")]
    MissingFeatures,
    #[error("non-finite value in {0}")]
    NumericalBlowup(&'static str),
    #[error("optimizer diverged after {} iterations", .trace.len().saturating_sub(1))]
    Diverged { trace: Vec<f64> },
    #[error("reference network produces no signal on the given states")]
    NoSignal,
    #[error("network has no non-zero off-diagonal entry")]
    ZeroNetwork,
    #[error("no non-zero actual values")]
    AllZeroActuals,
    #[error("only {nonempty} non-empty histogram bins, need at least 3")]
    InsufficientSupport { nonempty: usize },
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
