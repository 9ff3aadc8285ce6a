//! Independent oracles for the acceptance criteria. These reimplement the
//! checked quantities along different algorithmic routes and must stay
//! independent of the library's solvers.

use cidp_core::ids::Link;
use cidp_core::router::QueueState;
use cidp_core::sltm::SltmProblem;

/// Exhaustive optimum of the per-slot program: maximize
/// `sum w x + vh * (total capacity - data packets)` over all integer
/// allocations that respect unit link capacities and per-(node, flow)
/// backlog. `vh = V * h_dummy`; dummies fill all residual capacity when
/// `V > 0`, which the closed form above already accounts for.
pub fn brute_force_slot_optimum(q: &QueueState, links: &[Link], cap: u64, vh: f64) -> f64 {
    let n_flows = q.backlog.first().map(Vec::len).unwrap_or(0);
    let mut remaining = q.backlog.clone();
    let total_cap = links.len() as u64 * cap;

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        links: &[Link],
        idx: usize,
        cap: u64,
        n_flows: usize,
        vh: f64,
        q: &QueueState,
        remaining: &mut Vec<Vec<u64>>,
        data_value: f64,
        data_count: u64,
    ) -> (f64, u64) {
        if idx == links.len() {
            return (data_value, data_count);
        }
        let link = links[idx];
        // Option: ship nothing on this link.
        let mut best = recurse(
            links,
            idx + 1,
            cap,
            n_flows,
            vh,
            q,
            remaining,
            data_value,
            data_count,
        );
        for f in 0..n_flows {
            let w = q.backlog[link.from.0][f] as i64 - q.backlog[link.to.0][f] as i64;
            let avail = remaining[link.from.0][f].min(cap);
            for x in 1..=avail {
                remaining[link.from.0][f] -= x;
                let cand = recurse(
                    links,
                    idx + 1,
                    cap,
                    n_flows,
                    vh,
                    q,
                    remaining,
                    data_value + (w * x as i64) as f64,
                    data_count + x,
                );
                remaining[link.from.0][f] += x;
                if cand.0 - vh * cand.1 as f64 > best.0 - vh * best.1 as f64 {
                    best = cand;
                }
            }
        }
        best
    }

    let (value, count) = recurse(links, 0, cap, n_flows, vh, q, &mut remaining, 0.0, 0);
    value + vh * (total_cap - count) as f64
}

/// Max masked magnitude: the objective both solvers minimize.
fn masked_peak(p: &SltmProblem, s: &[f64]) -> (f64, usize) {
    let mut best = -1.0f64;
    let mut arg = 0usize;
    for l in 0..p.mask_angles_deg.len() {
        let z1: f64 = p.mask_re[l].iter().zip(s).map(|(r, w)| r * w).sum();
        let z2: f64 = p.mask_im[l].iter().zip(s).map(|(i, w)| i * w).sum();
        let m = (z1 * z1 + z2 * z2).sqrt();
        if m > best {
            best = m;
            arg = l;
        }
    }
    (best, arg)
}

/// Ellipsoid method on `min_s max_l |a(theta_l)^T s|` over the box
/// intersected with the main-lobe floor. A completely different algorithmic
/// route from the interior-point solver: central-cut ellipsoid, subgradient
/// cuts, best-feasible tracking. Deterministic.
pub fn ellipsoid_min_eta(p: &SltmProblem, iters: usize) -> f64 {
    let n = p.m;
    let floor = p.rho * n as f64;
    let mut x = vec![0.5f64; n];
    let r = 0.5 * (n as f64).sqrt() + 0.1;
    let mut shape = vec![vec![0.0f64; n]; n];
    for (i, row) in shape.iter_mut().enumerate() {
        row[i] = r * r;
    }
    let mut best = f64::INFINITY;
    for _ in 0..iters {
        // Pick a cut: feasibility first, else objective subgradient.
        let mut g = vec![0.0f64; n];
        let mut feasible = true;
        if let Some(j) = x.iter().position(|&v| v < 0.0) {
            g[j] = -1.0;
            feasible = false;
        } else if let Some(j) = x.iter().position(|&v| v > 1.0) {
            g[j] = 1.0;
            feasible = false;
        } else {
            let main: f64 = p.a0_re.iter().zip(&x).map(|(c, s)| c * s).sum();
            if main < floor {
                for (gj, &c) in g.iter_mut().zip(&p.a0_re) {
                    *gj = -c;
                }
                feasible = false;
            }
        }
        if feasible {
            let (peak, l) = masked_peak(p, &x);
            if peak < best {
                best = peak;
            }
            let z1: f64 = p.mask_re[l].iter().zip(&x).map(|(r, w)| r * w).sum();
            let z2: f64 = p.mask_im[l].iter().zip(&x).map(|(i, w)| i * w).sum();
            let denom = peak.max(1e-12);
            for j in 0..n {
                g[j] = (z1 * p.mask_re[l][j] + z2 * p.mask_im[l][j]) / denom;
            }
        }
        // Central-cut update.
        let pg: Vec<f64> = shape
            .iter()
            .map(|row| row.iter().zip(&g).map(|(a, b)| a * b).sum())
            .collect();
        let gpg: f64 = g.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if gpg <= 1e-300 {
            break;
        }
        let norm = gpg.sqrt();
        let nf = n as f64;
        for j in 0..n {
            x[j] -= pg[j] / norm / (nf + 1.0);
        }
        let scale = nf * nf / (nf * nf - 1.0);
        let coef = 2.0 / (nf + 1.0) / gpg;
        for i in 0..n {
            for j in 0..n {
                shape[i][j] = scale * (shape[i][j] - coef * pg[i] * pg[j]);
            }
        }
        // Keep the shape matrix symmetric against drift.
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (shape[i][j] + shape[j][i]);
                shape[i][j] = avg;
                shape[j][i] = avg;
            }
        }
    }
    best
}
