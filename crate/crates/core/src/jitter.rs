//! Robust discrete-time control-barrier jitter filter.
//!
//! Each real-time packet carries an accumulated lateness `d` against its
//! flow's nominal per-hop schedule; the barrier value is `h = D_max - d`.
//! At every hop the filter observes the raw delay variation `v`, holds early
//! packets back to the nominal schedule (`delta = max(0, t_align - v)`), and
//! accumulates only the late excess `e = max(0, v - t_align)`. Whenever the
//! disturbance respects `e <= alpha * h`, the step satisfies
//! `h(t+1) >= (1 - alpha) * h(t)`, and induction keeps `d <= D_max` for the
//! packet's whole path. The per-hop program (minimize the hold delay subject
//! to the barrier decrease condition) is scalar with one linear constraint,
//! so it is solved in closed form rather than with a numeric QP.
//!
//! Under a naive "minimize delta subject to `d + delta <= D_max - alpha*h`"
//! reading, `delta = 0` would always be optimal and holds would never fire;
//! the re-alignment dynamics are the minimal model in which holds do useful
//! work and the per-step invariance condition stays checkable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::FlowId;
use crate::rng::Stream;

/// Barrier state of one packet of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterState {
    pub flow: FlowId,
    /// Accumulated lateness, ms; non-negative.
    pub d_ms: f64,
    /// Jitter bound D_max, ms.
    pub dmax_ms: f64,
}

impl JitterState {
    pub fn fresh(flow: FlowId, dmax_ms: f64) -> Self {
        Self {
            flow,
            d_ms: 0.0,
            dmax_ms,
        }
    }

    /// Barrier value `h = D_max - d`.
    pub fn h_ms(&self) -> f64 {
        self.dmax_ms - self.d_ms
    }
}

/// Result of one filtered hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopOutcome {
    /// Hold delay applied to the packet, ms; the minimum feasible value.
    pub delta_ms: f64,
    /// Late excess absorbed into the packet's lateness, ms.
    pub excess_ms: f64,
    pub next: JitterState,
}

/// One hop of the barrier filter.
pub fn racbf_delay(
    state: &JitterState,
    v_ms: f64,
    t_align_ms: f64,
    alpha: f64,
) -> Result<HopOutcome> {
    let h = state.h_ms();
    if !(h > 0.0) {
        return Err(Error::BarrierViolation(format!(
            "{}: entered hop with h = {h} ms ≤ 0 (d = {} ms, D_max = {} ms); \
             should not occur under the filter",
            state.flow, state.d_ms, state.dmax_ms
        )));
    }
    if v_ms < 0.0 {
        return Err(Error::Domain(format!("hop delay v = {v_ms} ms < 0")));
    }
    let delta_ms = (t_align_ms - v_ms).max(0.0);
    let excess_ms = (v_ms - t_align_ms).max(0.0);
    // Tolerate rounding exactly at the bound; the invariance check uses the
    // same slack.
    if excess_ms > alpha * h * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::BarrierInfeasible(format!(
            "{}: disturbance excess {excess_ms} ms exceeds the absorbable bound \
             alpha*h = {} ms (alpha = {alpha}, h = {h} ms)",
            state.flow,
            alpha * h
        )));
    }
    let next = JitterState {
        flow: state.flow,
        d_ms: state.d_ms + excess_ms,
        dmax_ms: state.dmax_ms,
    };
    Ok(HopOutcome {
        delta_ms,
        excess_ms,
        next,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub ok: bool,
    /// `(step index, reason)` of the first violated condition, if any.
    pub first_violation: Option<(usize, String)>,
}

/// Check a per-packet barrier trace: `d <= D_max` at every step and
/// `h(t+1) >= (1 - alpha) * h(t)` across every consecutive pair.
pub fn verify_invariance(chain: &[JitterState], alpha: f64) -> InvarianceReport {
    const EPS: f64 = 1e-9;
    for (i, s) in chain.iter().enumerate() {
        if s.d_ms > s.dmax_ms + EPS {
            return InvarianceReport {
                ok: false,
                first_violation: Some((i, format!("d = {} > D_max = {}", s.d_ms, s.dmax_ms))),
            };
        }
    }
    for (i, w) in chain.windows(2).enumerate() {
        let floor = (1.0 - alpha) * w[0].h_ms();
        if w[1].h_ms() < floor - EPS {
            return InvarianceReport {
                ok: false,
                first_violation: Some((
                    i + 1,
                    format!("h = {} < (1 - alpha) * h_prev = {floor}", w[1].h_ms()),
                )),
            };
        }
    }
    InvarianceReport {
        ok: true,
        first_violation: None,
    }
}

/// Default per-hop budget: an even split of `D_max` over the nominal path
/// with one slot of slack, `dmax / (hops + 1)`.
pub fn default_t_align(dmax_ms: f64, nominal_hops: usize) -> f64 {
    dmax_ms / (nominal_hops as f64 + 1.0)
}

/// Default disturbance ceiling: the largest excess a worst-case chain of
/// `nominal_hops` late hops can absorb without breaking `e <= alpha * h`.
/// With `e_max = alpha * dmax / (1 + alpha * (hops - 1))` the bound binds
/// exactly on the all-late path and never breaks.
pub fn default_v_max(t_align_ms: f64, dmax_ms: f64, alpha: f64, nominal_hops: usize) -> f64 {
    let hops = nominal_hops.max(1) as f64;
    t_align_ms + alpha * dmax_ms / (1.0 + alpha * (hops - 1.0))
}

/// Draw one raw hop delay: early (`U[0, t_align)`) with probability
/// `1 - late_fraction`, late (`U[t_align, v_max)`) otherwise. Always consumes
/// exactly two draws so paired runs stay aligned.
pub fn draw_disturbance(
    rng: &mut Stream,
    t_align_ms: f64,
    v_max_ms: f64,
    late_fraction: f64,
) -> f64 {
    use rand::Rng;
    let pick: f64 = rng.random();
    let u: f64 = rng.random();
    let hi = v_max_ms.max(t_align_ms);
    if pick < late_fraction {
        t_align_ms + u * (hi - t_align_ms)
    } else {
        u * t_align_ms
    }
}
