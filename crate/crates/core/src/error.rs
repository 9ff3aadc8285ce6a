//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The config document does not match the schema; the message names the
    /// offending path.
    #[error("config schema violation at {0}")]
    Schema(String),

    /// The config parsed but violates a declared invariant.
    #[error("config invariant violated: {0}")]
    Invariant(String),

    /// A function was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The jitter filter was entered with a non-positive barrier value.
    /// Should not occur in a filtered run; it is the hard error branch of the
    /// per-hop delay allocation.
    #[error("barrier violation: {0}")]
    BarrierViolation(String),

    /// A disturbance exceeded the bound the barrier filter can absorb.
    #[error("barrier filter infeasible: {0}")]
    BarrierInfeasible(String),

    /// Radiometer threshold calibration was requested with too few trials
    /// for the target false-alarm quantile.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// No real-time packets were delivered, so jitter statistics are undefined.
    #[error("no real-time deliveries")]
    NoRealtimeDeliveries,

    /// An internal consistency check failed (e.g. a routing decision that
    /// ships more packets than are queued).
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
