//! Link-level physics: log-distance path loss, Rician fading, SINR link
//! gating, and the uniform-linear-array response used by the sidelobe
//! optimizer.
//!
//! The SINR model is noise-limited (no co-channel interference), so "SINR"
//! reduces to SNR; the `gamma0_db` threshold name is kept. Fading is redrawn
//! i.i.d. per slot per link with no temporal correlation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::NetworkSection;
use crate::error::{Error, Result};
use crate::ids::NodeId;
use crate::rng::Stream;

/// Reference distance of the log-distance model, meters.
pub const REF_DISTANCE_M: f64 = 1.0;
/// Reference gain at `REF_DISTANCE_M` with a unit fading envelope, dB.
pub const REF_GAIN_DB: f64 = 0.0;

/// Draw one Rician fading coefficient normalized to unit mean power:
/// a fixed line-of-sight component of power K/(K+1) plus circular scatter
/// of power 1/(K+1), with K the linear form of `k_db`.
pub fn rician_draw(k_db: f64, rng: &mut Stream) -> Complex64 {
    let k = 10f64.powf(k_db / 10.0);
    let los = (k / (k + 1.0)).sqrt();
    let sigma = (0.5 / (k + 1.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(los + sigma * re, sigma * im)
}

/// Instantaneous channel gain in dB:
/// `-10 * n * log10(d / d0) + 20 * log10(|h|) + G0`.
pub fn link_gain(distance_m: f64, pathloss_exponent: f64, h: Complex64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Domain(format!(
            "link_gain requires distance > 0 (got {distance_m})"
        )));
    }
    Ok(-10.0 * pathloss_exponent * (distance_m / REF_DISTANCE_M).log10()
        + 20.0 * h.norm().log10()
        + REF_GAIN_DB)
}

/// One link's state in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRealization {
    pub from: NodeId,
    pub to: NodeId,
    pub gain_db: f64,
    pub sinr_db: f64,
    pub active: bool,
}

/// Static geometry plus the link budget; fading draws come from the caller.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub positions: Vec<[f64; 2]>,
    pub gamma0_db: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub pathloss_exponent: f64,
}

impl LinkModel {
    pub fn new(net: &NetworkSection, positions: Vec<[f64; 2]>) -> Self {
        Self {
            positions,
            gamma0_db: net.gamma0_db,
            tx_power_dbm: net.tx_power_dbm,
            noise_dbm: net.noise_dbm,
            pathloss_exponent: net.pathloss_exponent,
        }
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let pa = self.positions[a.0];
        let pb = self.positions[b.0];
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    }

    /// Realize one directed link given a fading draw and an extra budget
    /// offset in dB (the SLTM main-lobe gain penalty in filtered runs).
    /// The activation boundary is inclusive: `sinr == gamma0` is active.
    pub fn link_state(
        &self,
        tx: NodeId,
        rx: NodeId,
        h: Complex64,
        budget_offset_db: f64,
    ) -> Result<LinkRealization> {
        if tx == rx {
            return Err(Error::Domain(format!("link_state requires tx ≠ rx (got {tx})")));
        }
        let gain_db = link_gain(self.distance(tx, rx), self.pathloss_exponent, h)?;
        let sinr_db = self.tx_power_dbm + budget_offset_db + gain_db - self.noise_dbm;
        Ok(LinkRealization {
            from: tx,
            to: rx,
            gain_db,
            sinr_db,
            active: sinr_db >= self.gamma0_db,
        })
    }

    /// Adjacency under unit fading (`|h| = 1`) at the given budget offset:
    /// the nominal topology used for shortest-path hop counts and the
    /// adversary's protocol knowledge.
    pub fn los_adjacency(&self, budget_offset_db: f64) -> Vec<Vec<NodeId>> {
        let n = self.positions.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let lr = self
                    .link_state(NodeId(i), NodeId(j), Complex64::new(1.0, 0.0), budget_offset_db)
                    .expect("distinct nodes");
                if lr.active {
                    adj[i].push(NodeId(j));
                }
            }
        }
        adj
    }
}

/// Place nodes uniformly in the square area. Uses the caller's "placement"
/// stream; positions stay fixed for the whole run (static topology), so
/// per-slot link variation comes from fading alone.
pub fn place_nodes(n_nodes: usize, area_m: f64, rng: &mut Stream) -> Vec<[f64; 2]> {
    use rand::Rng;
    (0..n_nodes)
        .map(|_| [rng.random::<f64>() * area_m, rng.random::<f64>() * area_m])
        .collect()
}

/// Uniform linear array with phase-only unit-modulus elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayResponse {
    pub m_elements: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayResponse {
    pub fn new(m_elements: usize, spacing_wavelengths: f64) -> Self {
        Self {
            m_elements,
            spacing_wavelengths,
        }
    }

    /// `a_m(theta) = exp(j 2 pi (m-1) d sin(theta))`, m = 1..=M.
    pub fn response(&self, theta_deg: f64) -> Vec<Complex64> {
        self.response_u(theta_deg.to_radians().sin())
    }

    /// Response as a function of `u = sin(theta)`; steered patterns evaluate
    /// at a difference of sines, which can leave [-1, 1].
    pub fn response_u(&self, u: f64) -> Vec<Complex64> {
        (0..self.m_elements)
            .map(|m| {
                let phase = 2.0 * std::f64::consts::PI * m as f64 * self.spacing_wavelengths * u;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect()
    }

    /// Complex gain of weight vector `s` observed at `u = sin(theta_look) -
    /// sin(theta_steer)` for an array steered with conjugate phase weights.
    pub fn gain_u(&self, s: &[f64], u: f64) -> Complex64 {
        debug_assert_eq!(s.len(), self.m_elements);
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &w) in s.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * m as f64 * self.spacing_wavelengths * u;
            acc += w * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }
}
