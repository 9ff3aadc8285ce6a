//! Event trace shared by all modules, emitted as JSON lines.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ids::{FlowId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Forward,
    Dummy,
    Hold,
    Deliver,
    Drop,
    BarrierViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow: Option<FlowId>,
    pub node: NodeId,
    /// Named scalar details; keys are sorted so serialization is stable.
    #[serde(default)]
    pub payload: BTreeMap<String, f64>,
}

impl TraceEvent {
    pub fn new(slot: u64, kind: EventKind, flow: Option<FlowId>, node: NodeId) -> Self {
        Self {
            slot,
            kind,
            flow,
            node,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.payload.insert(key.to_string(), value);
        self
    }
}

/// Which event kinds a run records. Full traces of long runs are large, so
/// callers pick what they need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceMask(u8);

impl TraceMask {
    const BITS: [(EventKind, u8); 7] = [
        (EventKind::Arrival, 1),
        (EventKind::Forward, 2),
        (EventKind::Dummy, 4),
        (EventKind::Hold, 8),
        (EventKind::Deliver, 16),
        (EventKind::Drop, 32),
        (EventKind::BarrierViolation, 64),
    ];

    pub fn none() -> Self {
        TraceMask(0)
    }

    pub fn all() -> Self {
        TraceMask(0x7f)
    }

    /// Hold, deliver and barrier-violation events: what the jitter-safety
    /// checks need.
    pub fn jitter() -> Self {
        TraceMask(8 | 16 | 64)
    }

    pub fn with(mut self, kind: EventKind) -> Self {
        for (k, b) in Self::BITS {
            if k == kind {
                self.0 |= b;
            }
        }
        self
    }

    pub fn records(&self, kind: EventKind) -> bool {
        Self::BITS
            .iter()
            .any(|&(k, b)| k == kind && self.0 & b != 0)
    }
}

/// Write one JSON object per line.
pub fn write_jsonl<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Slots must be non-decreasing within a trace; returns the first offending
/// index if not.
pub fn check_slot_order(events: &[TraceEvent]) -> Option<usize> {
    events
        .windows(2)
        .position(|w| w[1].slot < w[0].slot)
        .map(|i| i + 1)
}
