//! One replication of the slotted-time experiment.
//!
//! Per slot: realize fading-gated links, draw arrivals, route (drift-plus-
//! penalty in filtered mode, shortest path with dummy equalization in the
//! baseline), move packets, run the jitter filter over delivered real-time
//! packets, and feed the adversary's per-node detection process. All
//! randomness comes from labeled per-replication streams, so toggling the
//! mode changes no draw of the shared arrival/fading/disturbance streams and
//! the two modes can be compared pairwise.
//!
//! Real-time timing is an overlay on the slotted transport: every packet of
//! a real-time flow is scheduled against its flow's nominal path (shortest
//! path on the unit-fading topology) with a per-hop budget `t_align`. Hop
//! delay disturbances are drawn per (flow, packet, hop); the filtered mode
//! runs the barrier filter over them, the baseline applies no holds. A
//! packet's playout time is `emit + hops * t_align + d`, where `d` is its
//! accumulated schedule deviation, and jitter samples compare consecutive
//! playouts. Filtered deviations stay in `[0, D_max]` by the barrier
//! argument, which is what makes total compliance a theorem rather than a
//! tuning outcome.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::adversary::{gaussian_pd, gaussian_threshold, infer_anonymity, FlowObservables, SenderModel};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::ids::{FlowId, Link, NodeId};
use crate::jitter::{
    default_t_align, default_v_max, draw_disturbance, racbf_delay, JitterState,
};
use crate::metrics::MetricsLedger;
use crate::phy::{ArrayResponse, LinkModel};
use crate::rng::make_rng;
use crate::router::{apply_decision, decide_slot, Capacities, QueueState, RouterParams, RoutingDecision};
use crate::sltm;
use crate::trace::{EventKind, TraceEvent, TraceMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full stack: drift-plus-penalty routing, barrier jitter filter, SLTM.
    Cidp,
    /// Tor-like: shortest-path routing with dummy equalization, no SLTM, no
    /// barrier filter.
    Baseline,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub trace_mask: TraceMask,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            trace_mask: TraceMask::none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub positions: Vec<[f64; 2]>,
    pub queues: QueueState,
    pub clock_slot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub config_hash: String,
    pub mode: Mode,
    pub replication: u64,
    pub trace: Vec<TraceEvent>,
    pub ledger: MetricsLedger,
    pub final_state: NetworkState,
}

/// Hop-count-minimal next hop toward `dst` on the given adjacency, ties
/// broken by lowest node id. `None` when unreachable.
pub fn shortest_path_route(adj: &[Vec<NodeId>], from: NodeId, dst: NodeId) -> Option<NodeId> {
    next_hop_table(adj, dst)[from.0]
}

/// Next hops toward `dst` for every node at once (breadth-first from the
/// destination over reversed edges; neighbor scans in id order pin the
/// tie-break).
pub fn next_hop_table(adj: &[Vec<NodeId>], dst: NodeId) -> Vec<Option<NodeId>> {
    let n = adj.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, outs) in adj.iter().enumerate() {
        for v in outs {
            rev[v.0].push(u);
        }
    }
    let mut dist = vec![usize::MAX; n];
    dist[dst.0] = 0;
    let mut queue = VecDeque::from([dst.0]);
    while let Some(u) = queue.pop_front() {
        let mut preds = rev[u].clone();
        preds.sort_unstable();
        for p in preds {
            if dist[p] == usize::MAX {
                dist[p] = dist[u] + 1;
                queue.push_back(p);
            }
        }
    }
    (0..n)
        .map(|u| {
            if u == dst.0 || dist[u] == usize::MAX {
                return None;
            }
            adj[u]
                .iter()
                .copied()
                .filter(|v| dist[v.0] != usize::MAX && dist[v.0] + 1 == dist[u])
                .min()
        })
        .collect()
}

fn bearing_deg(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0]).to_degrees()
}

/// Precomputed per-run adversary tables.
struct EveModel {
    pfa: f64,
    /// Detection probability of one emission from node i beamed at node j.
    pd: Vec<Vec<f64>>,
}

impl EveModel {
    fn build(
        cfg: &ScenarioConfig,
        model: &LinkModel,
        eve: [f64; 2],
        schedule: Option<&[Vec<bool>]>,
    ) -> Self {
        let adv = &cfg.adversary;
        let n = model.positions.len();
        let array = ArrayResponse::new(cfg.sltm.m_elements, cfg.sltm.spacing_wavelengths);
        let ones = vec![1.0; cfg.sltm.m_elements];
        let threshold = gaussian_threshold(adv.pfa, adv.window_samples);
        let mut pd = vec![vec![0.0; n]; n];
        for i in 0..n {
            let d_eve = {
                let p = model.positions[i];
                ((p[0] - eve[0]).powi(2) + (p[1] - eve[1]).powi(2)).sqrt().max(1e-3)
            };
            let path_db =
                crate::phy::link_gain(d_eve, model.pathloss_exponent, Complex64::new(1.0, 0.0))
                    .expect("positive eavesdropper distance");
            let snr_iso = 10f64.powf((model.tx_power_dbm + path_db - model.noise_dbm) / 10.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                // Bearing offset between the beam (toward j) and the
                // eavesdropper, folded through the steered array pattern.
                let gamma = bearing_deg(model.positions[i], eve)
                    - bearing_deg(model.positions[i], model.positions[j]);
                let u = gamma.to_radians().sin();
                let g2 = match schedule {
                    None => array.gain_u(&ones, u).norm_sqr(),
                    Some(sched) => {
                        let mut acc = 0.0;
                        for sel in sched {
                            let s: Vec<f64> =
                                sel.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                            acc += array.gain_u(&s, u).norm_sqr();
                        }
                        acc / sched.len() as f64
                    }
                };
                pd[i][j] = gaussian_pd(snr_iso * g2, adv.window_samples, threshold)
                    .max(adv.pfa);
            }
        }
        Self { pfa: adv.pfa, pd }
    }
}

struct FlowRuntime {
    /// Nominal path node sequence from src (exclusive) to dst (inclusive);
    /// empty when the destination is unreachable on the nominal topology.
    nominal_path: Vec<NodeId>,
    nominal_hops: usize,
    t_align_ms: f64,
    v_max_ms: f64,
    /// Emission slots of every sequence number produced so far.
    emission_slots: Vec<u64>,
    /// Delivered (seq, playout_ms).
    playouts: Vec<(u64, f64)>,
    next_seq: u64,
}

/// Execute one replication.
pub fn run(
    cfg: &ScenarioConfig,
    mode: Mode,
    replication: u64,
    opts: &RunOptions,
) -> Result<SimulationRun> {
    cfg.validate()?;
    let seed = cfg.sim.seed;
    let n = cfg.network.n_nodes;
    let n_flows = cfg.flows.len();
    let slot_ms = cfg.sim.slot_ms;
    let mask = opts.trace_mask;

    let mut placement_rng = make_rng(seed, &format!("placement:{replication}"));
    let positions = crate::phy::place_nodes(n, cfg.network.area_m, &mut placement_rng);
    let model = LinkModel::new(&cfg.network, positions.clone());
    let eve = cfg
        .adversary
        .eve_xy
        .unwrap_or([cfg.network.area_m / 2.0, cfg.network.area_m / 2.0]);

    // Data links ride the main lobe, so the array gain enters the link
    // budget: 20*log10(M) for the full static beam, the mean sub-slot gain
    // under the switching schedule. The nominal (protocol-design) topology
    // always uses the full-array budget so both modes share paths.
    let full_gain_db = 20.0 * (cfg.sltm.m_elements as f64).log10();
    let (design, mainlobe_offset_db) = match mode {
        Mode::Cidp => {
            let d = sltm::design(cfg)?;
            let mean_gain = d.subslot_mainlobe_gain.iter().sum::<f64>()
                / d.subslot_mainlobe_gain.len().max(1) as f64;
            let offset = 20.0 * mean_gain.max(1e-6).log10();
            (Some(d), offset)
        }
        Mode::Baseline => (None, full_gain_db),
    };
    let e_phy_bits = design.as_ref().map(|d| d.e_phy_bits).unwrap_or(0.0);

    // Nominal topology and per-flow schedules.
    let los_adj = model.los_adjacency(full_gain_db);
    let mut flows_rt: Vec<FlowRuntime> = Vec::with_capacity(n_flows);
    for f in &cfg.flows {
        let table = next_hop_table(&los_adj, NodeId(f.dst));
        let mut path = Vec::new();
        let mut cur = NodeId(f.src);
        while cur != NodeId(f.dst) {
            match table[cur.0] {
                Some(next) => {
                    path.push(next);
                    cur = next;
                }
                None => {
                    path.clear();
                    break;
                }
            }
        }
        let hops = if path.is_empty() { 1 } else { path.len() };
        let t_align = cfg
            .control
            .t_align_ms
            .unwrap_or_else(|| default_t_align(cfg.control.dmax_ms, hops));
        let v_max = cfg.control.v_max_ms.unwrap_or_else(|| {
            default_v_max(t_align, cfg.control.dmax_ms, cfg.control.alpha, hops)
        });
        flows_rt.push(FlowRuntime {
            nominal_path: path,
            nominal_hops: hops,
            t_align_ms: t_align,
            v_max_ms: v_max,
            emission_slots: Vec::new(),
            playouts: Vec::new(),
            next_seq: 0,
        });
    }

    let eve_model = EveModel::build(cfg, &model, eve, design.as_ref().map(|d| &d.schedule[..]));
    // Per-flow adversary hypothesis tables from the nominal topology.
    let sender_models: Vec<SenderModel> = cfg
        .flows
        .iter()
        .map(|f| {
            let table = next_hop_table(&los_adj, NodeId(f.dst));
            let q_point: Vec<f64> = (0..n)
                .map(|c| match table[c] {
                    Some(next) if c != f.dst => eve_model.pd[c][next.0],
                    _ => {
                        // No directional hypothesis: fall back to the cover marginal.
                        let outs = &los_adj[c];
                        if outs.is_empty() {
                            eve_model.pfa
                        } else {
                            outs.iter().map(|m| eve_model.pd[c][m.0]).sum::<f64>()
                                / outs.len() as f64
                        }
                    }
                })
                .collect();
            let q_rand: Vec<f64> = (0..n)
                .map(|c| {
                    let outs = &los_adj[c];
                    if outs.is_empty() {
                        eve_model.pfa
                    } else {
                        outs.iter().map(|m| eve_model.pd[c][m.0]).sum::<f64>()
                            / outs.len() as f64
                    }
                })
                .collect();
            SenderModel {
                receiver: NodeId(f.dst),
                q_point,
                q_rand,
            }
        })
        .collect();

    // Pathloss cache for the per-slot fading loop.
    let mut pathloss_db = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pathloss_db[i][j] = -10.0
                    * cfg.network.pathloss_exponent
                    * model.distance(NodeId(i), NodeId(j)).log10();
            }
        }
    }

    let mut fading_rng = make_rng(seed, &format!("fading:{replication}"));
    let mut arrivals_rng = make_rng(seed, &format!("arrivals:{replication}"));
    let mut bl_dummy_rng = make_rng(seed, &format!("bldummy:{replication}"));
    let mut obs_rng = make_rng(seed, &format!("obs:{replication}"));

    let caps = Capacities::uniform(cfg.network.link_capacity);
    let params = RouterParams {
        v: cfg.control.v,
        h_dummy: cfg.control.h_dummy_bits,
        e_phy_rate: e_phy_bits,
    };

    let mut q = QueueState::new(n, n_flows);
    let mut books: Vec<Vec<VecDeque<u64>>> = vec![vec![VecDeque::new(); n_flows]; n];
    let mut ledger = MetricsLedger::new(n_flows);
    let mut trace: Vec<TraceEvent> = Vec::new();

    let mut all_obs: Vec<Vec<bool>> = Vec::with_capacity(cfg.sim.n_slots as usize);
    let mut emission_pd: Vec<f64> = vec![1.0; n];
    let mut emitted: Vec<bool> = vec![false; n];

    for t in 0..cfg.sim.n_slots {
        // 1. Fading-gated link realizations (one draw per unordered pair,
        //    reciprocal channel; budget offset applies the SLTM main-lobe
        //    penalty in filtered mode).
        let mut active: Vec<Link> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let h = crate::phy::rician_draw(cfg.network.rician_k_db, &mut fading_rng);
                let gain_db = pathloss_db[i][j] + 10.0 * h.norm_sqr().log10();
                let sinr_db =
                    cfg.network.tx_power_dbm + mainlobe_offset_db + gain_db - cfg.network.noise_dbm;
                if sinr_db >= cfg.network.gamma0_db {
                    active.push(Link::new(i, j));
                    active.push(Link::new(j, i));
                }
            }
        }
        active.sort_unstable();

        // 2. Arrivals: periodic for real-time flows, Poisson otherwise.
        let mut arrivals: Vec<(NodeId, FlowId, u64)> = Vec::new();
        for (fi, f) in cfg.flows.iter().enumerate() {
            let mut count = 0u64;
            if f.realtime {
                let rt = &mut flows_rt[fi];
                while (rt.next_seq as f64 * f.period_ms / slot_ms).floor() as u64 == t {
                    rt.emission_slots.push(t);
                    books[f.src][fi].push_back(rt.next_seq);
                    rt.next_seq += 1;
                    count += 1;
                }
            } else {
                let lambda = f.rate_pkts_per_s * slot_ms / 1000.0;
                let poisson = Poisson::new(lambda).expect("positive rate");
                count = arrivals_rng.sample(poisson) as u64;
                let rt = &mut flows_rt[fi];
                for _ in 0..count {
                    books[f.src][fi].push_back(rt.next_seq);
                    rt.next_seq += 1;
                }
            }
            if count > 0 {
                arrivals.push((NodeId(f.src), FlowId(fi), count));
                ledger.arrived_per_flow[fi] += count;
                ledger.nominal_pkts += count;
                if mask.records(EventKind::Arrival) {
                    trace.push(
                        TraceEvent::new(t, EventKind::Arrival, Some(FlowId(fi)), NodeId(f.src))
                            .with("count", count as f64),
                    );
                }
            }
        }

        // 3. Routing decision.
        let decision = match mode {
            Mode::Cidp => decide_slot(&q, &active, &caps, &params),
            Mode::Baseline => {
                baseline_decide(cfg, &q, &active, &caps, &mut bl_dummy_rng)
            }
        };
        ledger.entropy_bits_total += decision.entropy_injected;

        if mask.records(EventKind::Forward) {
            for &(l, f, x) in &decision.transmissions {
                trace.push(
                    TraceEvent::new(t, EventKind::Forward, Some(f), l.from)
                        .with("to", l.to.0 as f64)
                        .with("count", x as f64),
                );
            }
        }
        if mask.records(EventKind::Dummy) {
            for &(l, x) in &decision.dummies {
                trace.push(
                    TraceEvent::new(t, EventKind::Dummy, None, l.from)
                        .with("to", l.to.0 as f64)
                        .with("count", x as f64),
                );
            }
        }

        // 4. Apply to queues and packet books; deliveries run the jitter
        //    overlay.
        let (next_q, _delivered) = apply_decision(&q, &decision, &arrivals, &cfg.flows)?;
        for &(l, fi, x) in &decision.transmissions {
            let f = &cfg.flows[fi.0];
            for _ in 0..x {
                let seq = books[l.from.0][fi.0]
                    .pop_front()
                    .ok_or_else(|| Error::Internal("packet book underflow".into()))?;
                if l.to.0 == f.dst {
                    ledger.delivered_per_flow[fi.0] += 1;
                    ledger.delivered_data_pkts += 1;
                    if f.realtime {
                        deliver_realtime(
                            cfg, mode, replication, fi, seq, t, &mut flows_rt[fi.0], &mut trace,
                            mask,
                        )?;
                    } else if mask.records(EventKind::Deliver) {
                        trace.push(
                            TraceEvent::new(t, EventKind::Deliver, Some(fi), l.to)
                                .with("seq", seq as f64),
                        );
                    }
                } else {
                    books[l.to.0][fi.0].push_back(seq);
                }
            }
        }
        ledger.delivered_dummy_pkts += decision.dummy_packets();
        q = next_q;
        debug_assert!(books
            .iter()
            .enumerate()
            .all(|(ni, rows)| rows
                .iter()
                .enumerate()
                .all(|(fi, b)| b.len() as u64 == q.backlog[ni][fi])));

        // 5. Adversary observation: one radiometer decision per node per
        //    slot over that node's aggregate emissions.
        emission_pd.iter_mut().for_each(|p| *p = 1.0);
        emitted.iter_mut().for_each(|e| *e = false);
        for &(l, _, x) in &decision.transmissions {
            for _ in 0..x {
                emission_pd[l.from.0] *= 1.0 - eve_model.pd[l.from.0][l.to.0];
            }
            emitted[l.from.0] = true;
        }
        for &(l, x) in &decision.dummies {
            for _ in 0..x {
                emission_pd[l.from.0] *= 1.0 - eve_model.pd[l.from.0][l.to.0];
            }
            emitted[l.from.0] = true;
        }
        let row: Vec<bool> = (0..n)
            .map(|i| {
                let p = if emitted[i] {
                    1.0 - emission_pd[i]
                } else {
                    eve_model.pfa
                };
                obs_rng.random::<f64>() < p
            })
            .collect();
        all_obs.push(row);

        ledger.backlog_series.push(q.total());
    }

    // 6. Sender-anonymity inference over the adversary-visible projection.
    let flow_observables: Vec<FlowObservables> = cfg
        .flows
        .iter()
        .enumerate()
        .filter(|(_, f)| f.realtime)
        .map(|(fi, _)| FlowObservables {
            model: sender_models[fi].clone(),
            emission_slots: flows_rt[fi].emission_slots.clone(),
        })
        .collect();
    ledger.anonymity_posteriors = infer_anonymity(
        &all_obs,
        &flow_observables,
        cfg.adversary.epoch_slots,
        cfg.adversary.candidates,
    );

    // Jitter samples: consecutive sequence pairs of delivered packets.
    for (fi, f) in cfg.flows.iter().enumerate() {
        if !f.realtime {
            continue;
        }
        let rt = &mut flows_rt[fi];
        rt.playouts.sort_unstable_by_key(|&(seq, _)| seq);
        for w in rt.playouts.windows(2) {
            let (s0, p0) = w[0];
            let (s1, p1) = w[1];
            if s1 == s0 + 1 {
                ledger.jitter_samples_ms[fi].push((p1 - p0 - f.period_ms).abs());
            }
        }
    }

    Ok(SimulationRun {
        config_hash: cfg.config_hash(),
        mode,
        replication,
        trace,
        ledger,
        final_state: NetworkState {
            positions,
            queues: q,
            clock_slot: cfg.sim.n_slots,
        },
    })
}

/// Baseline slot decision: forward every queued packet toward its
/// shortest-path next hop up to capacity; nodes that sent no data emit one
/// dummy on one uniformly random active link.
fn baseline_decide(
    cfg: &ScenarioConfig,
    q: &QueueState,
    active: &[Link],
    caps: &Capacities,
    rng: &mut crate::rng::Stream,
) -> RoutingDecision {
    let n = cfg.network.n_nodes;
    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for l in active {
        adj[l.from.0].push(l.to);
    }
    for outs in &mut adj {
        outs.sort_unstable();
    }
    let mut tables: Vec<Option<Vec<Option<NodeId>>>> = vec![None; n];
    let mut used: std::collections::BTreeMap<Link, u64> = std::collections::BTreeMap::new();
    let mut transmissions = Vec::new();
    let mut sent_data = vec![false; n];
    for node in 0..n {
        for (fi, f) in cfg.flows.iter().enumerate() {
            let backlog = q.backlog[node][fi];
            if backlog == 0 {
                continue;
            }
            let table = tables[f.dst].get_or_insert_with(|| next_hop_table(&adj, NodeId(f.dst)));
            let Some(next) = table[node] else {
                continue; // destination unreachable this slot: packets wait
            };
            let link = Link {
                from: NodeId(node),
                to: next,
            };
            let cap = caps.get(link);
            let already = used.get(&link).copied().unwrap_or(0);
            let x = backlog.min(cap.saturating_sub(already));
            if x > 0 {
                transmissions.push((link, FlowId(fi), x));
                *used.entry(link).or_insert(0) += x;
                sent_data[node] = true;
            }
        }
    }
    let mut dummies = Vec::new();
    for node in 0..n {
        if sent_data[node] || adj[node].is_empty() {
            continue;
        }
        let pick = (rng.random::<u64>() % adj[node].len() as u64) as usize;
        dummies.push((
            Link {
                from: NodeId(node),
                to: adj[node][pick],
            },
            1,
        ));
    }
    RoutingDecision {
        transmissions,
        dummies,
        entropy_injected: 0.0,
    }
}

/// Deliver one real-time packet: run the per-hop schedule overlay and record
/// its playout.
#[allow(clippy::too_many_arguments)]
fn deliver_realtime(
    cfg: &ScenarioConfig,
    mode: Mode,
    replication: u64,
    flow: FlowId,
    seq: u64,
    slot: u64,
    rt: &mut FlowRuntime,
    trace: &mut Vec<TraceEvent>,
    mask: TraceMask,
) -> Result<()> {
    let f = &cfg.flows[flow.0];
    let emit_ms = seq as f64 * f.period_ms;
    let hops = rt.nominal_hops;
    let mut deviation = 0.0; // filtered: accumulated excess; baseline: signed drift
    let mut state = JitterState::fresh(flow, cfg.control.dmax_ms);
    for hop in 0..hops {
        let mut hop_rng = make_rng(
            cfg.sim.seed,
            &format!("disturb:{replication}:{}:{seq}:{hop}", flow.0),
        );
        let v = draw_disturbance(
            &mut hop_rng,
            rt.t_align_ms,
            rt.v_max_ms,
            cfg.control.late_fraction,
        );
        match mode {
            Mode::Cidp => {
                let node = rt
                    .nominal_path
                    .get(hop)
                    .copied()
                    .unwrap_or(NodeId(f.dst));
                let before_h = state.h_ms();
                let out = match racbf_delay(&state, v, rt.t_align_ms, cfg.control.alpha) {
                    Ok(out) => out,
                    Err(e) => {
                        if mask.records(EventKind::BarrierViolation) {
                            trace.push(
                                TraceEvent::new(slot, EventKind::BarrierViolation, Some(flow), node)
                                    .with("d_ms", state.d_ms),
                            );
                        }
                        return Err(e);
                    }
                };
                if mask.records(EventKind::Hold) {
                    trace.push(
                        TraceEvent::new(slot, EventKind::Hold, Some(flow), node)
                            .with("seq", seq as f64)
                            .with("hop", hop as f64)
                            .with("v_ms", v)
                            .with("delta_ms", out.delta_ms)
                            .with("h_before_ms", before_h)
                            .with("h_after_ms", out.next.h_ms())
                            .with("d_ms", out.next.d_ms),
                    );
                }
                state = out.next;
                deviation = state.d_ms;
            }
            Mode::Baseline => {
                deviation += v - rt.t_align_ms;
            }
        }
    }
    let playout = emit_ms + hops as f64 * rt.t_align_ms + deviation;
    rt.playouts.push((seq, playout));
    if mask.records(EventKind::Deliver) {
        trace.push(
            TraceEvent::new(slot, EventKind::Deliver, Some(flow), NodeId(f.dst))
                .with("seq", seq as f64)
                .with("playout_ms", playout)
                .with("deviation_ms", deviation),
        );
    }
    Ok(())
}
