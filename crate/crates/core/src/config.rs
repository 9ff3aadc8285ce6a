//! Scenario configuration: one JSON document fully determines a run.
//!
//! Omitted fields take the documented defaults below, so a minimal scenario
//! only needs a node count and a flow list. [`parse_config`] validates every
//! invariant and reports the offending path or invariant by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

/// The canonical 16-node / 16-element scenario shipped with the crate.
pub const PAPER_SCENARIO_JSON: &str = include_str!("../scenarios/paper_scenario.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub sltm: SltmSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub n_nodes: usize,
    /// Side length of the square deployment area, meters.
    pub area_m: f64,
    /// SINR activation threshold, dB.
    pub gamma0_db: f64,
    pub pathloss_exponent: f64,
    pub rician_k_db: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    /// Per-link capacity in packets per slot.
    pub link_capacity: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            n_nodes: 16,
            area_m: 600.0,
            gamma0_db: 15.0,
            pathloss_exponent: 2.7,
            rician_k_db: 6.0,
            tx_power_dbm: 10.0,
            noise_dbm: -70.0,
            link_capacity: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub src: usize,
    pub dst: usize,
    #[serde(default = "default_rate")]
    pub rate_pkts_per_s: f64,
    /// Nominal inter-packet period for real-time flows, milliseconds.
    #[serde(default = "default_period")]
    pub period_ms: f64,
    #[serde(default = "default_true")]
    pub realtime: bool,
    #[serde(default)]
    pub priority: u8,
}

fn default_rate() -> f64 {
    50.0
}
fn default_period() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Drift-plus-penalty weight on entropy injection (`V >= 0`).
    #[serde(rename = "V")]
    pub v: f64,
    /// Barrier decrease rate, in (0,1).
    pub alpha: f64,
    /// Per-hop nominal latency budget, ms. `None` derives
    /// `dmax_ms / (nominal hops + 1)` per flow.
    pub t_align_ms: Option<f64>,
    /// Hard jitter bound D_max, ms.
    pub dmax_ms: f64,
    /// Entropy credited per dummy packet, bits. Makes `V` interpretable.
    pub h_dummy_bits: f64,
    /// Upper support of per-hop delay disturbances, ms. `None` derives the
    /// largest value the barrier filter is guaranteed to absorb:
    /// `t_align + alpha * dmax / (1 + alpha * (hops - 1))`.
    pub v_max_ms: Option<f64>,
    /// Fraction of hop disturbances drawn from the late side of the budget.
    pub late_fraction: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            v: 0.5,
            alpha: 0.7,
            t_align_ms: None,
            dmax_ms: 30.0,
            h_dummy_bits: 1.0,
            v_max_ms: None,
            late_fraction: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SltmSection {
    pub m_elements: usize,
    pub spacing_wavelengths: f64,
    /// Main-lobe direction, degrees.
    pub theta0_deg: f64,
    /// Half-width of the mask exclusion zone around the main lobe, degrees.
    pub mask_exclusion_deg: f64,
    pub grid_step_deg: f64,
    /// Sub-slots per switching cycle.
    pub subslots: usize,
    /// Main-lobe gain floor as a fraction of full gain M, in (0,1].
    pub rho: f64,
    /// Use the literal main-lobe equality `F(theta0) = M` instead of the
    /// `>= rho * M` floor. Degenerate for an aligned steering vector: the
    /// all-ones selection is then the only feasible point.
    pub literal_mainlobe: bool,
    /// Solver certificate tolerance (duality-gap bound).
    pub tol: f64,
    /// Quantization levels per axis (magnitude and phase) for the
    /// equivocation estimate.
    pub quantization_levels: usize,
}

impl Default for SltmSection {
    fn default() -> Self {
        Self {
            m_elements: 16,
            spacing_wavelengths: 0.5,
            theta0_deg: 0.0,
            mask_exclusion_deg: 8.0,
            grid_step_deg: 1.0,
            subslots: 64,
            rho: 0.9,
            literal_mainlobe: false,
            tol: 1e-6,
            quantization_levels: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSet {
    /// Every node is a candidate sender.
    All,
    /// Only nodes observed emitting during the epoch.
    Emitters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    pub snr_grid_db: Vec<f64>,
    /// Target false-alarm probability, in (0,1).
    pub pfa: f64,
    pub window_samples: usize,
    pub mc_trials: usize,
    /// Representative off-axis bearing offset for the detection sweep, degrees.
    pub theta_eve_deg: f64,
    /// Observation parameter of the trilemma bound (bookkeeping input,
    /// never estimated from traces).
    pub tau: f64,
    /// Coupling weight of physical equivocation in the trilemma bound,
    /// bits^-1.
    pub gamma: f64,
    /// Slots per anonymity-inference epoch.
    pub epoch_slots: u64,
    /// Eavesdropper position; defaults to the area center.
    pub eve_xy: Option<[f64; 2]>,
    pub candidates: CandidateSet,
}

impl Default for AdversarySection {
    fn default() -> Self {
        Self {
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            pfa: 0.05,
            window_samples: 100,
            mc_trials: 10_000,
            theta_eve_deg: 11.0,
            tau: 1.0,
            gamma: 0.1,
            epoch_slots: 100,
            eve_xy: None,
            candidates: CandidateSet::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_slots: u64,
    pub slot_ms: f64,
    pub seed: u64,
    pub replications: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_slots: 20_000,
            slot_ms: 1.0,
            seed: 42,
            replications: 10,
        }
    }
}

/// Parse and validate a JSON scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Schema(format!("{}: {}", e.path(), e.inner())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// The shipped canonical scenario (16 nodes, 16-element array,
    /// D_max = 30 ms).
    pub fn paper_scenario() -> Self {
        parse_config(PAPER_SCENARIO_JSON).expect("shipped scenario must parse")
    }

    /// FNV-1a hash of the canonical serialization; stamped on every output
    /// file for provenance.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(msg: String) -> Result<()> {
            Err(Error::Invariant(msg))
        }
        let n = &self.network;
        if n.n_nodes < 2 {
            return bad(format!("network.n_nodes ≥ 2 (got {})", n.n_nodes));
        }
        if !(n.area_m > 0.0) {
            return bad(format!("network.area_m > 0 (got {})", n.area_m));
        }
        if !(n.pathloss_exponent >= 0.0) {
            return bad(format!(
                "network.pathloss_exponent ≥ 0 (got {})",
                n.pathloss_exponent
            ));
        }
        if n.link_capacity == 0 {
            return bad("network.link_capacity ≥ 1 (got 0)".into());
        }
        for (i, f) in self.flows.iter().enumerate() {
            if f.src == f.dst {
                return bad(format!("flows[{i}].src ≠ flows[{i}].dst (got {})", f.src));
            }
            if f.src >= n.n_nodes || f.dst >= n.n_nodes {
                return bad(format!(
                    "flows[{i}] endpoints < n_nodes = {} (got src {}, dst {})",
                    n.n_nodes, f.src, f.dst
                ));
            }
            if !(f.rate_pkts_per_s > 0.0) {
                return bad(format!(
                    "flows[{i}].rate_pkts_per_s > 0 (got {})",
                    f.rate_pkts_per_s
                ));
            }
            if f.realtime && !(f.period_ms > 0.0) {
                return bad(format!(
                    "flows[{i}].period_ms > 0 when realtime (got {})",
                    f.period_ms
                ));
            }
        }
        let c = &self.control;
        if !(c.v >= 0.0) {
            return bad(format!("control.V ≥ 0 (got {})", c.v));
        }
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            return bad(format!("control.alpha ∈ (0,1) (got {})", c.alpha));
        }
        if !(c.dmax_ms > 0.0) {
            return bad(format!("control.dmax_ms > 0 (got {})", c.dmax_ms));
        }
        if let Some(t) = c.t_align_ms {
            if !(t > 0.0) {
                return bad(format!("control.t_align_ms > 0 (got {t})"));
            }
        }
        if let Some(v) = c.v_max_ms {
            if !(v > 0.0) {
                return bad(format!("control.v_max_ms > 0 (got {v})"));
            }
        }
        if !(c.h_dummy_bits >= 0.0) {
            return bad(format!("control.h_dummy_bits ≥ 0 (got {})", c.h_dummy_bits));
        }
        if !(0.0..=1.0).contains(&c.late_fraction) {
            return bad(format!(
                "control.late_fraction ∈ [0,1] (got {})",
                c.late_fraction
            ));
        }
        let s = &self.sltm;
        if s.m_elements < 2 {
            return bad(format!("sltm.m_elements ≥ 2 (got {})", s.m_elements));
        }
        if !(s.spacing_wavelengths > 0.0) {
            return bad(format!(
                "sltm.spacing_wavelengths > 0 (got {})",
                s.spacing_wavelengths
            ));
        }
        if s.subslots < 1 {
            return bad("sltm.subslots ≥ 1 (got 0)".into());
        }
        if !(s.grid_step_deg > 0.0) {
            return bad(format!("sltm.grid_step_deg > 0 (got {})", s.grid_step_deg));
        }
        if !(s.mask_exclusion_deg > 0.0) {
            return bad(format!(
                "sltm.mask_exclusion_deg > 0 (got {})",
                s.mask_exclusion_deg
            ));
        }
        if !(s.rho > 0.0 && s.rho <= 1.0) {
            return bad(format!("sltm.rho ∈ (0,1] (got {})", s.rho));
        }
        if !(s.tol > 0.0) {
            return bad(format!("sltm.tol > 0 (got {})", s.tol));
        }
        if s.quantization_levels < 1 {
            return bad("sltm.quantization_levels ≥ 1 (got 0)".into());
        }
        let a = &self.adversary;
        if !(a.pfa > 0.0 && a.pfa < 1.0) {
            return bad(format!("adversary.pfa ∈ (0,1) (got {})", a.pfa));
        }
        if a.window_samples < 1 {
            return bad("adversary.window_samples ≥ 1 (got 0)".into());
        }
        if a.mc_trials < 1 {
            return bad("adversary.mc_trials ≥ 1 (got 0)".into());
        }
        if !(a.tau >= 0.0) {
            return bad(format!("adversary.tau ≥ 0 (got {})", a.tau));
        }
        if !(a.gamma >= 0.0) {
            return bad(format!("adversary.gamma ≥ 0 (got {})", a.gamma));
        }
        if a.epoch_slots == 0 {
            return bad("adversary.epoch_slots ≥ 1 (got 0)".into());
        }
        if !(self.sim.slot_ms > 0.0) {
            return bad(format!("sim.slot_ms > 0 (got {})", self.sim.slot_ms));
        }
        if self.sim.replications == 0 {
            return bad("sim.replications ≥ 1 (got 0)".into());
        }
        Ok(())
    }
}
