//! CIDP: a cross-layer anonymity stack at desk scale.
//!
//! The crate wires four mechanisms into one deterministic slotted-time
//! simulator so their guarantees can be checked against each other:
//!
//! * [`router`] — drift-plus-penalty (max-weight) routing with cover-traffic
//!   injection, plus queue-stability telemetry;
//! * [`jitter`] — a robust discrete-time control-barrier filter that holds
//!   per-packet jitter of real-time flows under a hard bound;
//! * [`sltm`] — convex sidelobe-minimizing antenna schedules (an interior-point
//!   SOCP solve, binary rounding, and an equivocation estimate);
//! * [`adversary`] — a global passive observer: radiometer detection,
//!   sender-anonymity posteriors, and the augmented trilemma bound.
//!
//! [`sim`] orchestrates one replication and [`metrics`] turns the resulting
//! ledgers into comparison artifacts. Everything is driven by a single JSON
//! [`config::ScenarioConfig`]; all randomness flows through labeled streams
//! from [`rng::make_rng`], so identical configs replay bit-identically.

// `!(x > 0.0)` guards must also reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix notation in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod adversary;
pub mod config;
pub mod error;
pub mod ids;
pub mod jitter;
pub mod metrics;
pub mod phy;
pub mod rng;
pub mod router;
pub mod sim;
pub mod sltm;
pub mod trace;

pub use config::{parse_config, ScenarioConfig};
pub use error::{Error, Result};
pub use ids::{FlowId, Link, NodeId};
pub use sim::{run, Mode, RunOptions, SimulationRun};
