//! Global passive adversary: radiometer detection of emissions, Bayesian
//! sender-anonymity inference, and the augmented trilemma bound.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::ids::NodeId;
use crate::phy::ArrayResponse;
use crate::rng::{make_rng, Stream};
use crate::sltm::pattern_binary;

/// Inputs of the augmented anonymity bound
/// `2 tau (beta + lambda) + gamma * E_phy >= 1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrilemmaInputs {
    pub tau: f64,
    /// Dummy fraction in `[0,1]`.
    pub beta: f64,
    /// Latency overhead, unitless, >= 0.
    pub lambda: f64,
    /// Coupling weight of physical equivocation, bits^-1, >= 0.
    pub gamma: f64,
    /// Injected physical equivocation, bits, >= 0.
    pub e_phy: f64,
}

impl TrilemmaInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::Domain(format!("tau ≥ 0 (got {})", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Domain(format!("beta ∈ [0,1] (got {})", self.beta)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda ≥ 0 (got {})", self.lambda)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Domain(format!("gamma ≥ 0 (got {})", self.gamma)));
        }
        if !(self.e_phy >= 0.0) {
            return Err(Error::Domain(format!("e_phy ≥ 0 (got {})", self.e_phy)));
        }
        Ok(())
    }
}

/// Smallest adversary success rate consistent with the augmented bound:
/// `max(0, min(1, 1 - 2 tau (beta + lambda) - gamma * e_phy))`.
pub fn delta_floor(inputs: &TrilemmaInputs) -> Result<f64> {
    inputs.validate()?;
    let raw = 1.0 - 2.0 * inputs.tau * (inputs.beta + inputs.lambda) - inputs.gamma * inputs.e_phy;
    Ok(raw.clamp(0.0, 1.0))
}

/// Energy detector: `sum_{k < window} |y_k|^2 > threshold`.
pub fn radiometer(observations: &[Complex64], window: usize, threshold: f64) -> Result<bool> {
    if window < 1 {
        return Err(Error::Domain("radiometer window must be ≥ 1".into()));
    }
    if observations.len() < window {
        return Err(Error::Domain(format!(
            "radiometer needs {window} samples (got {})",
            observations.len()
        )));
    }
    let stat: f64 = observations[..window].iter().map(|y| y.norm_sqr()).sum();
    Ok(stat > threshold)
}

fn noise_sample(rng: &mut Stream) -> Complex64 {
    // Unit-power circular complex noise: each quadrature N(0, 1/2).
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Empirical `(1 - pfa)` quantile of the noise-only test statistic.
pub fn calibrate_threshold(pfa: f64, window: usize, trials: usize, rng: &mut Stream) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Domain(format!("pfa ∈ (0,1) (got {pfa})")));
    }
    if (trials as f64) * pfa < 20.0 {
        return Err(Error::Calibration(format!(
            "{trials} trials resolve the {pfa} false-alarm quantile too coarsely \
             (need trials * pfa ≥ 20)"
        )));
    }
    let mut stats: Vec<f64> = (0..trials)
        .map(|_| (0..window).map(|_| noise_sample(rng).norm_sqr()).sum())
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let k = ((1.0 - pfa) * trials as f64).ceil() as usize;
    Ok(stats[k.clamp(1, trials) - 1])
}

/// Upper-tail standard normal probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `z` with `Q(z) = p`, by bisection; deterministic and accurate to ~1e-12.
pub fn q_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian approximation of the radiometer detection probability for a
/// constant per-sample signal power `snr_lin`: the statistic is approximately
/// normal with mean `w (1 + s)` and variance `w (1 + 2 s)`.
pub fn gaussian_pd(snr_lin: f64, window: usize, threshold: f64) -> f64 {
    let w = window as f64;
    let mean = w * (1.0 + snr_lin);
    let var = w * (1.0 + 2.0 * snr_lin);
    q_function((threshold - mean) / var.sqrt())
}

/// Noise-only threshold in the same Gaussian model: `w + z_pfa * sqrt(w)`.
pub fn gaussian_threshold(pfa: f64, window: usize) -> f64 {
    let w = window as f64;
    w + q_inverse(pfa) * w.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    CidpSltm,
    StaticBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionPoint {
    pub snr_db: f64,
    pub p_d: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub mode: DetectionMode,
    pub trials: usize,
    pub points: Vec<DetectionPoint>,
}

/// Monte Carlo radiometer sweep over the configured SNR grid.
///
/// SNR is defined as the per-sample received SNR of the static baseline's
/// sidelobe toward the configured eavesdropper bearing; the filtered mode
/// transmits the same symbol power through its sub-slot-varying gains, so
/// the two curves share a transmit-power axis.
pub fn detection_sweep(
    cfg: &ScenarioConfig,
    mode: DetectionMode,
    schedule: &[Vec<bool>],
) -> Result<DetectionCurve> {
    let adv = &cfg.adversary;
    let array = ArrayResponse::new(cfg.sltm.m_elements, cfg.sltm.spacing_wavelengths);
    let ones = vec![true; cfg.sltm.m_elements];
    let g_base = pattern_binary(&ones, &array, adv.theta_eve_deg).norm();
    if g_base <= 0.0 {
        return Err(Error::Domain(
            "baseline sidelobe gain vanishes at theta_eve; SNR normalization undefined".into(),
        ));
    }
    let gains: Vec<f64> = match mode {
        DetectionMode::StaticBaseline => vec![g_base],
        DetectionMode::CidpSltm => {
            if schedule.is_empty() {
                return Err(Error::Domain(
                    "cidp_sltm detection sweep needs a non-empty schedule".into(),
                ));
            }
            schedule
                .iter()
                .map(|sel| pattern_binary(sel, &array, adv.theta_eve_deg).norm())
                .collect()
        }
    };

    let mut cal_rng = make_rng(cfg.sim.seed, "detect:calibrate");
    let threshold = calibrate_threshold(adv.pfa, adv.window_samples, adv.mc_trials, &mut cal_rng)?;

    let label = match mode {
        DetectionMode::CidpSltm => "detect:sweep:cidp",
        DetectionMode::StaticBaseline => "detect:sweep:baseline",
    };
    let mut rng = make_rng(cfg.sim.seed, label);
    let mut points = Vec::with_capacity(adv.snr_grid_db.len());
    for &snr_db in &adv.snr_grid_db {
        let snr_lin = 10f64.powf(snr_db / 10.0);
        let amp_scale = snr_lin.sqrt() / g_base;
        let mut detects = 0usize;
        for trial in 0..adv.mc_trials {
            let offset = trial % gains.len();
            let mut stat = 0.0;
            for k in 0..adv.window_samples {
                let g = gains[(offset + k) % gains.len()];
                let y = noise_sample(&mut rng) + Complex64::new(amp_scale * g, 0.0);
                stat += y.norm_sqr();
            }
            if stat > threshold {
                detects += 1;
            }
        }
        let p_d = detects as f64 / adv.mc_trials as f64;
        points.push(DetectionPoint {
            snr_db,
            p_d,
            stderr: (p_d * (1.0 - p_d) / adv.mc_trials as f64).sqrt(),
        });
    }
    Ok(DetectionCurve {
        mode,
        trials: adv.mc_trials,
        points,
    })
}

/// Posterior over candidate senders for one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymityPosterior {
    pub receiver: NodeId,
    pub weights: Vec<f64>,
    /// `2^H(weights)`: the effective sender-set size.
    pub effective_set_size: f64,
}

impl AnonymityPosterior {
    pub fn from_weights(receiver: NodeId, weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        debug_assert!((sum - 1.0).abs() < 1e-9, "weights must sum to 1 (got {sum})");
        let h_bits: f64 = weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.log2())
            .sum();
        Self {
            receiver,
            weights,
            effective_set_size: h_bits.exp2(),
        }
    }
}

/// The adversary's per-flow generative model: under hypothesis "candidate c
/// sends this flow", c's emission at a flow slot is detected with
/// probability `q_point[c]` (beam fixed on the nominal next hop toward the
/// receiver); under any other hypothesis it is detected with the cover
/// marginal `q_rand[c]` (beam on a uniformly random neighbor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenderModel {
    pub receiver: NodeId,
    pub q_point: Vec<f64>,
    pub q_rand: Vec<f64>,
}

/// One flow's inputs to [`infer_anonymity`]: the hypothesis tables plus the
/// absolute slot indices at which the flow emits.
#[derive(Debug, Clone)]
pub struct FlowObservables {
    pub model: SenderModel,
    pub emission_slots: Vec<u64>,
}

/// Sender-anonymity inference over the adversary-visible projection of a
/// run: per-node per-slot detection outcomes only, never queue contents or
/// payloads. Produces one posterior per (epoch, flow) for every epoch in
/// which the flow emitted.
pub fn infer_anonymity(
    detections: &[Vec<bool>],
    flows: &[FlowObservables],
    epoch_slots: u64,
    candidates: crate::config::CandidateSet,
) -> Vec<AnonymityPosterior> {
    let mut out = Vec::new();
    if detections.is_empty() {
        return out;
    }
    let n = detections[0].len();
    let total = detections.len() as u64;
    let mut epoch_start = 0u64;
    while epoch_start < total {
        let epoch_end = (epoch_start + epoch_slots).min(total);
        let epoch = &detections[epoch_start as usize..epoch_end as usize];
        let allowed: Vec<bool> = match candidates {
            crate::config::CandidateSet::All => vec![true; n],
            crate::config::CandidateSet::Emitters => {
                let mut seen = vec![false; n];
                for row in epoch {
                    for (i, &d) in row.iter().enumerate() {
                        seen[i] |= d;
                    }
                }
                if seen.iter().any(|&s| s) {
                    seen
                } else {
                    vec![true; n]
                }
            }
        };
        for fo in flows {
            let rows: Vec<Vec<bool>> = fo
                .emission_slots
                .iter()
                .filter(|&&s| s >= epoch_start && s < epoch_end)
                .map(|&s| detections[s as usize].clone())
                .collect();
            if !rows.is_empty() {
                out.push(sender_posterior(&fo.model, &rows, &allowed));
            }
        }
        epoch_start = epoch_end;
    }
    out
}

/// Bayes update from the detection outcomes at the flow's emission slots.
/// `obs` is slot-major: one row per emission slot, one bool per node.
/// `candidates[c] = false` excludes node c a priori (restricted candidate
/// sets); if every hypothesis has zero likelihood the posterior falls back
/// to uniform over the candidates.
pub fn sender_posterior(
    model: &SenderModel,
    obs: &[Vec<bool>],
    candidates: &[bool],
) -> AnonymityPosterior {
    let n = model.q_point.len();
    let ln_bern = |hit: bool, p: f64| if hit { p.ln() } else { (1.0 - p).ln() };
    let mut log_l = vec![f64::NEG_INFINITY; n];
    for c in 0..n {
        if !candidates[c] {
            continue;
        }
        let mut acc = 0.0;
        for row in obs {
            for (node, &hit) in row.iter().enumerate() {
                let p = if node == c {
                    model.q_point[node]
                } else {
                    model.q_rand[node]
                };
                acc += ln_bern(hit, p);
            }
        }
        log_l[c] = acc;
    }
    let lmax = log_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = if lmax.is_finite() {
        log_l.iter().map(|&l| (l - lmax).exp()).collect()
    } else {
        candidates.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    };
    let mut sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        weights = vec![1.0; n];
        sum = n as f64;
    }
    for w in &mut weights {
        *w /= sum;
    }
    AnonymityPosterior::from_weights(model.receiver, weights)
}
