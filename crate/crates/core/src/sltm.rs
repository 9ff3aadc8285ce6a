//! Sidelobe-time-modulation design: build the convex sidelobe-minimization
//! program, solve it to global optimality, round to a binary switching
//! schedule, and estimate the injected physical equivocation.
//!
//! The relaxed program over `s in [0,1]^M` and the epigraph variable `eta`
//! minimizes `eta` subject to `|a(theta_l)^T s| <= eta` on a masked angle
//! grid and a main-lobe floor `Re{a(theta_0)^T s} >= rho * M`. Each masked
//! magnitude bound is a second-order cone constraint on the real and
//! imaginary parts, the floor and box are affine, and the objective is
//! linear, so every local optimum is global. The literal full-gain equality
//! `F(theta_0) = M` admits exactly one point of the box (the all-ones
//! selection) when the steering phases are aligned; it is kept behind
//! `literal_mainlobe` and the floor is the default.
//!
//! The solver is a log-barrier path-following method with dense Newton
//! steps: a `-ln(eta^2 - |F_l|^2)` barrier per cone, `-ln` barriers for the
//! box and floor, and barrier parameter `nu = 2L + 2M + 1`. The returned
//! certificate `kkt_residual = nu / t_final` bounds the duality gap; the
//! returned point is strictly feasible by construction. No global mutable
//! state, no wall-clock dependence: identical problems yield bit-identical
//! designs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::phy::ArrayResponse;

/// The discretized sidelobe-minimization instance.
#[derive(Debug, Clone)]
pub struct SltmProblem {
    pub m: usize,
    pub theta0_deg: f64,
    pub mask_angles_deg: Vec<f64>,
    /// Real and imaginary parts of `a(theta_l)`, one row per mask angle.
    pub mask_re: Vec<Vec<f64>>,
    pub mask_im: Vec<Vec<f64>>,
    /// `a(theta_0)`.
    pub a0_re: Vec<f64>,
    pub a0_im: Vec<f64>,
    /// Main-lobe floor as a fraction of full gain.
    pub rho: f64,
    pub literal_mainlobe: bool,
    pub array: ArrayResponse,
}

/// A solved and rounded design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SltmDesign {
    pub s_relaxed: Vec<f64>,
    /// Achieved maximum masked magnitude of `s_relaxed` (exact recompute).
    pub eta_star: f64,
    /// One selection vector per sub-slot.
    pub schedule: Vec<Vec<bool>>,
    /// `|F(theta_0)|` of each sub-slot.
    pub subslot_mainlobe_gain: Vec<f64>,
    pub e_phy_bits: f64,
    /// Duality-gap bound of the relaxed solve.
    pub kkt_residual: f64,
}

/// Complex pattern gain `F(theta) = a(theta)^T s` with phases fixed to zero.
pub fn pattern(s: &[f64], array: &ArrayResponse, theta_deg: f64) -> Complex64 {
    let a = array.response(theta_deg);
    s.iter()
        .zip(&a)
        .map(|(&w, am)| w * am)
        .fold(Complex64::new(0.0, 0.0), |acc, x| acc + x)
}

/// Pattern gain of a binary sub-slot selection.
pub fn pattern_binary(sel: &[bool], array: &ArrayResponse, theta_deg: f64) -> Complex64 {
    let s: Vec<f64> = sel.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    pattern(&s, array, theta_deg)
}

/// Discretize the mask grid and precompute responses.
pub fn build_problem(cfg: &ScenarioConfig) -> Result<SltmProblem> {
    let s = &cfg.sltm;
    let array = ArrayResponse::new(s.m_elements, s.spacing_wavelengths);
    let mut mask_angles_deg = Vec::new();
    let mut theta = -90.0;
    while theta <= 90.0 + 1e-9 {
        if (theta - s.theta0_deg).abs() > s.mask_exclusion_deg + 1e-9 {
            mask_angles_deg.push(theta);
        }
        theta += s.grid_step_deg;
    }
    if mask_angles_deg.is_empty() {
        return Err(Error::Invariant(
            "sltm mask is empty after the exclusion zone; widen the grid or \
             shrink mask_exclusion_deg"
                .into(),
        ));
    }
    let mut mask_re = Vec::with_capacity(mask_angles_deg.len());
    let mut mask_im = Vec::with_capacity(mask_angles_deg.len());
    for &t in &mask_angles_deg {
        let a = array.response(t);
        mask_re.push(a.iter().map(|c| c.re).collect());
        mask_im.push(a.iter().map(|c| c.im).collect());
    }
    let a0 = array.response(s.theta0_deg);
    Ok(SltmProblem {
        m: s.m_elements,
        theta0_deg: s.theta0_deg,
        mask_angles_deg,
        mask_re,
        mask_im,
        a0_re: a0.iter().map(|c| c.re).collect(),
        a0_im: a0.iter().map(|c| c.im).collect(),
        rho: s.rho,
        literal_mainlobe: s.literal_mainlobe,
        array,
    })
}

/// Max masked magnitude of a weight vector: the quantity `eta` bounds.
pub fn max_masked_magnitude(p: &SltmProblem, s: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for l in 0..p.mask_angles_deg.len() {
        let z1: f64 = p.mask_re[l].iter().zip(s).map(|(r, w)| r * w).sum();
        let z2: f64 = p.mask_im[l].iter().zip(s).map(|(i, w)| i * w).sum();
        best = best.max((z1 * z1 + z2 * z2).sqrt());
    }
    best
}

fn is_aligned(p: &SltmProblem) -> bool {
    p.a0_re
        .iter()
        .zip(&p.a0_im)
        .all(|(&re, &im)| (re - 1.0).abs() < 1e-9 && im.abs() < 1e-9)
}

struct Barrier<'a> {
    p: &'a SltmProblem,
    /// Main-lobe floor right-hand side.
    floor: f64,
}

impl Barrier<'_> {
    fn n(&self) -> usize {
        self.p.m + 1
    }

    /// Strict interior test.
    fn feasible(&self, x: &[f64]) -> bool {
        let m = self.p.m;
        let eta = x[m];
        if !(eta > 0.0) {
            return false;
        }
        for &s in &x[..m] {
            if !(s > 0.0 && s < 1.0) {
                return false;
            }
        }
        let main: f64 = self.p.a0_re.iter().zip(x).map(|(c, s)| c * s).sum();
        if !(main > self.floor) {
            return false;
        }
        for l in 0..self.p.mask_angles_deg.len() {
            let z1: f64 = self.p.mask_re[l].iter().zip(x).map(|(r, s)| r * s).sum();
            let z2: f64 = self.p.mask_im[l].iter().zip(x).map(|(i, s)| i * s).sum();
            if !(eta * eta - z1 * z1 - z2 * z2 > 0.0) {
                return false;
            }
        }
        true
    }

    /// Barrier objective `t * eta + B(x)`; assumes feasibility.
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let m = self.p.m;
        let eta = x[m];
        let mut v = t * eta;
        for &s in &x[..m] {
            v -= s.ln() + (1.0 - s).ln();
        }
        let main: f64 = self.p.a0_re.iter().zip(x).map(|(c, s)| c * s).sum();
        v -= (main - self.floor).ln();
        for l in 0..self.p.mask_angles_deg.len() {
            let z1: f64 = self.p.mask_re[l].iter().zip(x).map(|(r, s)| r * s).sum();
            let z2: f64 = self.p.mask_im[l].iter().zip(x).map(|(i, s)| i * s).sum();
            v -= (eta * eta - z1 * z1 - z2 * z2).ln();
        }
        v
    }

    /// Gradient and dense Hessian (row-major, lower triangle accumulated
    /// then mirrored) of `value` at `x`.
    fn derivatives(&self, x: &[f64], t: f64, dd: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.p.m;
        let n = self.n();
        let eta = x[m];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        g[m] = t;
        for (j, &s) in x[..m].iter().enumerate() {
            g[j] += -1.0 / s + 1.0 / (1.0 - s);
            h[j * n + j] += 1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s));
        }
        let main: f64 = self.p.a0_re.iter().zip(x).map(|(c, s)| c * s).sum();
        let slack = main - self.floor;
        let inv_slack2 = 1.0 / (slack * slack);
        for j in 0..m {
            let cj = self.p.a0_re[j];
            g[j] -= cj / slack;
            let row = &mut h[j * n..j * n + j + 1];
            for (k, hk) in row.iter_mut().enumerate() {
                *hk += cj * self.p.a0_re[k] * inv_slack2;
            }
        }
        for l in 0..self.p.mask_angles_deg.len() {
            let r = &self.p.mask_re[l];
            let im = &self.p.mask_im[l];
            let mut z1 = 0.0;
            let mut z2 = 0.0;
            for j in 0..m {
                z1 += r[j] * x[j];
                z2 += im[j] * x[j];
            }
            let d = eta * eta - z1 * z1 - z2 * z2;
            let inv_d = 1.0 / d;
            // dD/dx: s-part -2 z1 r - 2 z2 i, eta-part 2 eta.
            for j in 0..m {
                dd[j] = -2.0 * (z1 * r[j] + z2 * im[j]);
            }
            dd[m] = 2.0 * eta;
            // Hessian: dD dD^T / D^2 + (2/D)(rr^T + ii^T) on the s-block,
            // -2/D on (eta, eta).
            let inv_d2 = inv_d * inv_d;
            let two_inv_d = 2.0 * inv_d;
            for j in 0..n {
                g[j] -= dd[j] * inv_d;
                let ddj = dd[j] * inv_d2;
                let row = &mut h[j * n..j * n + j + 1];
                if j < m {
                    let rj = r[j];
                    let ij = im[j];
                    for k in 0..=j {
                        row[k] += ddj * dd[k] + two_inv_d * (rj * r[k] + ij * im[k]);
                    }
                } else {
                    for (k, hk) in row.iter_mut().enumerate() {
                        *hk += ddj * dd[k];
                    }
                }
            }
            h[m * n + m] -= two_inv_d;
        }
        for j in 0..n {
            for k in (j + 1)..n {
                h[j * n + k] = h[k * n + j];
            }
        }
        (g, h)
    }
}

/// Solve `H x = b` (row-major dense SPD) by Cholesky with a ridge fallback
/// for near-singular late-path Hessians. Returns `None` only if the matrix
/// is irreparably indefinite.
fn solve_spd(h: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let max_diag = (0..n).map(|i| h[i * n + i].abs()).fold(0.0f64, f64::max);
    let mut ridge = 0.0;
    'attempt: for _ in 0..6 {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = h[i * n + j] + if i == j { ridge } else { 0.0 };
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        ridge = (ridge * 10.0).max(1e-12 * max_diag.max(1.0));
                        continue 'attempt;
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        let mut xv = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l[k * n + i] * xv[k];
            }
            xv[i] = sum / l[i * n + i];
        }
        return Some(xv);
    }
    None
}

/// Solve the relaxed program; `tol` bounds both the certificate and the
/// feasibility slack of the returned point (interior points have zero
/// constraint violation).
pub fn solve_socp(p: &SltmProblem, tol: f64) -> Result<SltmDesign> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("solver tol must be > 0 (got {tol})")));
    }
    let mfull = p.m as f64;
    if p.literal_mainlobe {
        // The equality F(theta0) = M over the box admits only the all-ones
        // point when the steering phases are aligned; anything else cannot
        // reach magnitude M at all.
        if !is_aligned(p) {
            return Err(Error::Invariant(
                "literal main-lobe equality is infeasible for an unaligned \
                 steering vector; use the rho floor instead"
                    .into(),
            ));
        }
        let s = vec![1.0; p.m];
        let eta_star = max_masked_magnitude(p, &s);
        return Ok(SltmDesign {
            s_relaxed: s,
            eta_star,
            schedule: Vec::new(),
            subslot_mainlobe_gain: Vec::new(),
            e_phy_bits: 0.0,
            kkt_residual: 0.0,
        });
    }

    let floor = p.rho * mfull;
    let cmax: f64 = p.a0_re.iter().map(|&c| c.max(0.0)).sum();
    if cmax <= floor {
        return Err(Error::Invariant(format!(
            "main-lobe floor rho*M = {floor} is unreachable (max attainable \
             Re F(theta0) = {cmax})"
        )));
    }
    let bar = Barrier { p, floor };

    // Strictly feasible start: blend the floor-maximizing vertex with the
    // box center until the floor holds with margin.
    let vertex: Vec<f64> = p.a0_re.iter().map(|&c| if c > 0.0 { 1.0 } else { 0.0 }).collect();
    let center = 0.5;
    let c_center: f64 = p.a0_re.iter().sum::<f64>() * center;
    let target = floor + 0.5 * (cmax - floor);
    let lambda = if c_center > target {
        0.0
    } else {
        ((target - c_center) / (cmax - c_center)).clamp(0.0, 0.999)
    };
    let mut x: Vec<f64> = vertex
        .iter()
        .map(|&v| (lambda * v + (1.0 - lambda) * center).clamp(1e-4, 1.0 - 1e-4))
        .collect();
    let start_eta = max_masked_magnitude(p, &x);
    x.push(start_eta * 2.0 + 1.0);
    if !bar.feasible(&x) {
        return Err(Error::Internal("sltm start point infeasible".into()));
    }

    let nu = (2 * p.mask_angles_deg.len() + 2 * p.m + 1) as f64;
    let mut t = 1.0;
    let mu = 80.0;
    let mut dd_buf = vec![0.0; bar.n()];
    loop {
        // Newton phase at fixed t.
        for _ in 0..50 {
            let (g, h) = bar.derivatives(&x, t, &mut dd_buf);
            let Some(step) = solve_spd(&h, &g) else {
                return Err(Error::Internal("sltm newton system not SPD".into()));
            };
            // Descent direction is -step; decrement^2 = g^T H^-1 g.
            let decrement_sq: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            if decrement_sq * 0.5 < 1e-10 {
                break;
            }
            let mut alpha = 1.0;
            let base = bar.value(&x, t);
            let slope: f64 = -decrement_sq;
            for _ in 0..80 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&step)
                    .map(|(xi, si)| xi - alpha * si)
                    .collect();
                if bar.feasible(&trial) && bar.value(&trial, t) <= base + 0.25 * alpha * slope {
                    x = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if nu / t <= tol {
            break;
        }
        t *= mu;
    }

    let s = x[..p.m].to_vec();
    let eta_star = max_masked_magnitude(p, &s);
    Ok(SltmDesign {
        s_relaxed: s,
        eta_star,
        schedule: Vec::new(),
        subslot_mainlobe_gain: Vec::new(),
        e_phy_bits: 0.0,
        kkt_residual: nu / t,
    })
}

/// Deterministic dithering: element `m` is active in `round(s_m * K)` of the
/// `K` sub-slots, spread evenly (active at sub-slot `k` iff the running
/// quota `floor((k+1) n_m / K)` increments). The per-element time average is
/// within `1/K` of `s_m` by construction.
pub fn round_schedule(design: &SltmDesign, subslots: usize, array: &ArrayResponse, theta0_deg: f64) -> SltmDesign {
    let k_total = subslots.max(1);
    let quotas: Vec<usize> = design
        .s_relaxed
        .iter()
        .map(|&s| ((s * k_total as f64).round() as usize).min(k_total))
        .collect();
    let mut schedule = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let entry: Vec<bool> = quotas
            .iter()
            .map(|&n| ((k + 1) * n) / k_total > (k * n) / k_total)
            .collect();
        schedule.push(entry);
    }
    let subslot_mainlobe_gain: Vec<f64> = schedule
        .iter()
        .map(|sel| pattern_binary(sel, array, theta0_deg).norm())
        .collect();
    SltmDesign {
        s_relaxed: design.s_relaxed.clone(),
        eta_star: design.eta_star,
        schedule,
        subslot_mainlobe_gain,
        e_phy_bits: design.e_phy_bits,
        kkt_residual: design.kkt_residual,
    }
}

/// Shannon entropy (bits) of the quantized complex gain observed at
/// `theta_eve_deg` across the schedule's sub-slots. Magnitude is binned
/// uniformly over `[0, M]` and phase over `[-pi, pi)`, `levels` bins each.
pub fn estimate_ephy(
    schedule: &[Vec<bool>],
    array: &ArrayResponse,
    theta_eve_deg: f64,
    levels: usize,
) -> f64 {
    if schedule.is_empty() {
        return 0.0;
    }
    let levels = levels.max(1);
    let m = array.m_elements as f64;
    let mut counts = std::collections::BTreeMap::new();
    for sel in schedule {
        let f = pattern_binary(sel, array, theta_eve_deg);
        let mag_bin = ((f.norm() / m * levels as f64).floor() as usize).min(levels - 1);
        let phase = f.arg(); // arg(0) = 0 keeps the null gain deterministic
        let phase_bin = (((phase + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            * levels as f64)
            .floor() as usize)
            .min(levels - 1);
        *counts.entry((mag_bin, phase_bin)).or_insert(0usize) += 1;
    }
    let total = schedule.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Full pipeline: build, solve, round, and attach the equivocation estimate
/// at the configured eavesdropper bearing.
pub fn design(cfg: &ScenarioConfig) -> Result<SltmDesign> {
    let p = build_problem(cfg)?;
    let relaxed = solve_socp(&p, cfg.sltm.tol)?;
    let mut d = round_schedule(&relaxed, cfg.sltm.subslots, &p.array, p.theta0_deg);
    d.e_phy_bits = estimate_ephy(
        &d.schedule,
        &p.array,
        cfg.adversary.theta_eve_deg,
        cfg.sltm.quantization_levels,
    );
    Ok(d)
}
