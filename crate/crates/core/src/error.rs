use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("state index {index} out of range for a source with {count} states")]
    StateIndex { index: usize, count: usize },

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("row {row} of the transition matrix sums to {sum:.15}, not 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("invalid loss matrix: {0}")]
    InvalidLoss(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error(
        "stationary distribution did not converge after {iterations} iterations \
         (residual {residual:.3e}); the chain may be periodic or reducible"
    )]
    StationaryNotConverged { iterations: usize, residual: f64 },

    #[error("chain has {count} closed recurrent classes; a unique one is required")]
    NotUnichain { count: usize },

    #[error("danger level `{0}` is not a label of the loss matrix")]
    UnknownDangerLevel(String),

    #[error("age {delta} outside the table horizon 1..={delta_max}")]
    DeltaOutOfRange { delta: usize, delta_max: usize },

    #[error("estimator table does not cover age {delta} (table horizon {delta_max})")]
    EstimatorGap { delta: usize, delta_max: usize },

    #[error("the monotonicity certificate requires a table built with the optimal estimator")]
    RequiresOptimalEstimator,

    #[error("instance has {size} arm states; exhaustive policy enumeration is capped at {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("net-gain policy needs a gain table for every arm")]
    MissingGains,

    #[error("horizon {horizon} must exceed warmup {warmup}")]
    BadHorizon { horizon: u64, warmup: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
