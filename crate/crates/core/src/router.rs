//! Per-slot drift-plus-penalty routing and dummy-traffic injection.
//!
//! Each slot solves the drift-plus-penalty program restricted to one slot:
//! maximize `sum w_ij^f x_ij^f + V * h_dummy * dummies` over integer
//! allocations subject to per-link capacity and per-(node, flow) backlog,
//! where `w_ij^f = Q_i^f - Q_j^f` is the backpressure weight. The program
//! separates per source node into a small transportation problem (capacity
//! constraints couple flows on a link, backlog couples links out of a node,
//! and nothing couples distinct source nodes), which is solved exactly with
//! successive shortest augmenting paths. A data packet is scheduled only
//! where its weight strictly exceeds the dummy value `V * h_dummy`; all
//! remaining active capacity carries dummies whenever `V > 0`, since each
//! dummy adds entropy at no queue cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::FlowSpec;
use crate::error::{Error, Result};
use crate::ids::{FlowId, Link, NodeId};

/// Per-node per-flow backlog at a slot boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueState {
    /// `backlog[node][flow]`, packets. Destination rows stay at zero:
    /// receptions at a flow's destination leave the network immediately.
    pub backlog: Vec<Vec<u64>>,
    pub slot: u64,
}

impl QueueState {
    pub fn new(n_nodes: usize, n_flows: usize) -> Self {
        Self {
            backlog: vec![vec![0; n_flows]; n_nodes],
            slot: 0,
        }
    }

    pub fn get(&self, node: NodeId, flow: FlowId) -> u64 {
        self.backlog[node.0][flow.0]
    }

    pub fn total(&self) -> u64 {
        self.backlog.iter().flatten().sum()
    }
}

/// Backpressure weight: differential backlog along the link.
pub fn link_weight(q: &QueueState, link: Link, flow: FlowId) -> i64 {
    q.get(link.from, flow) as i64 - q.get(link.to, flow) as i64
}

/// Per-link packet capacities with a uniform default.
#[derive(Debug, Clone)]
pub struct Capacities {
    pub overrides: BTreeMap<Link, u64>,
    pub default: u64,
}

impl Capacities {
    pub fn uniform(default: u64) -> Self {
        Self {
            overrides: BTreeMap::new(),
            default,
        }
    }

    pub fn get(&self, link: Link) -> u64 {
        self.overrides.get(&link).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterParams {
    /// Drift-plus-penalty entropy weight `V`.
    pub v: f64,
    /// Entropy credited per dummy packet, bits.
    pub h_dummy: f64,
    /// Physical-layer entropy rate folded into this slot's injected entropy,
    /// bits (supplied by the SLTM design; zero without it).
    pub e_phy_rate: f64,
}

/// What the router decided for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    /// `(link, flow, packets)`, each strictly positive.
    pub transmissions: Vec<(Link, FlowId, u64)>,
    /// `(link, packets)` of cover traffic, active links only.
    pub dummies: Vec<(Link, u64)>,
    /// `dummies * h_dummy + e_phy_rate`, bits.
    pub entropy_injected: f64,
}

impl RoutingDecision {
    pub fn data_packets(&self) -> u64 {
        self.transmissions.iter().map(|t| t.2).sum()
    }

    pub fn dummy_packets(&self) -> u64 {
        self.dummies.iter().map(|d| d.1).sum()
    }

    /// Slot objective `sum w x + V * h_dummy * dummies`, evaluated against the
    /// queue state the decision was made for. The physical entropy term is a
    /// constant of the slot and excluded.
    pub fn objective(&self, q: &QueueState, v: f64, h_dummy: f64) -> f64 {
        let data: i64 = self
            .transmissions
            .iter()
            .map(|&(l, f, x)| link_weight(q, l, f) * x as i64)
            .sum();
        data as f64 + v * h_dummy * self.dummy_packets() as f64
    }
}

struct Edge {
    to: usize,
    rev: usize,
    cap: u64,
    cost: f64,
}

struct FlowNet {
    graph: Vec<Vec<Edge>>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        Self {
            graph: (0..n).map(|_| Vec::new()).collect(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: u64, cost: f64) {
        let rev_from = self.graph[to].len();
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            cost,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0,
            cost: -cost,
        });
    }

    /// Successive shortest augmenting paths until no negative-cost path from
    /// `s` to `t` remains. Bellman-Ford with fixed relaxation order and
    /// strict improvement keeps the result deterministic.
    fn run(&mut self, s: usize, t: usize) {
        loop {
            let n = self.graph.len();
            let mut dist = vec![f64::INFINITY; n];
            let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for (ei, e) in self.graph[u].iter().enumerate() {
                        if e.cap == 0 {
                            continue;
                        }
                        let nd = dist[u] + e.cost;
                        if nd < dist[e.to] {
                            dist[e.to] = nd;
                            parent[e.to] = Some((u, ei));
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !(dist[t] < 0.0) {
                break;
            }
            // Bottleneck along the path, then augment.
            let mut bottleneck = u64::MAX;
            let mut v = t;
            while v != s {
                let (u, ei) = parent[v].expect("path exists");
                bottleneck = bottleneck.min(self.graph[u][ei].cap);
                v = u;
            }
            let mut v = t;
            while v != s {
                let (u, ei) = parent[v].expect("path exists");
                let rev = self.graph[u][ei].rev;
                self.graph[u][ei].cap -= bottleneck;
                let to = self.graph[u][ei].to;
                self.graph[to][rev].cap += bottleneck;
                v = u;
            }
        }
    }
}

/// Exact slot decision: max-weight data scheduling plus dummy fill.
pub fn decide_slot(
    q: &QueueState,
    active_links: &[Link],
    caps: &Capacities,
    params: &RouterParams,
) -> RoutingDecision {
    let vh = params.v * params.h_dummy;
    let n_flows = q.backlog.first().map_or(0, Vec::len);

    // Group active links by source node, preserving a sorted, deduplicated
    // order for determinism.
    let mut links: Vec<Link> = active_links.to_vec();
    links.sort_unstable();
    links.dedup();

    let mut by_source: BTreeMap<NodeId, Vec<Link>> = BTreeMap::new();
    for l in &links {
        by_source.entry(l.from).or_default().push(*l);
    }

    let mut transmissions: Vec<(Link, FlowId, u64)> = Vec::new();
    let mut data_used: BTreeMap<Link, u64> = BTreeMap::new();

    for (&node, out) in &by_source {
        // Candidate (flow, link) pairs whose backpressure weight beats the
        // dummy value strictly.
        let flows_with_backlog: Vec<FlowId> = (0..n_flows)
            .map(FlowId)
            .filter(|&f| q.get(node, f) > 0)
            .collect();
        if flows_with_backlog.is_empty() {
            continue;
        }
        let mut candidates = Vec::new();
        for (li, &l) in out.iter().enumerate() {
            for &f in &flows_with_backlog {
                let w = link_weight(q, l, f);
                if w > 0 && w as f64 > vh {
                    candidates.push((f, li, w));
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }

        // Transportation problem: source -> flow nodes -> link nodes -> sink.
        let nf = flows_with_backlog.len();
        let nl = out.len();
        let s = 0;
        let t = 1 + nf + nl;
        let mut net = FlowNet::new(t + 1);
        for (fi, &f) in flows_with_backlog.iter().enumerate() {
            net.add_edge(s, 1 + fi, q.get(node, f), 0.0);
        }
        let flow_index: BTreeMap<FlowId, usize> = flows_with_backlog
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, i))
            .collect();
        for &(f, li, w) in &candidates {
            let profit = w as f64 - vh;
            net.add_edge(1 + flow_index[&f], 1 + nf + li, u64::MAX / 4, -profit);
        }
        for (li, &l) in out.iter().enumerate() {
            net.add_edge(1 + nf + li, t, caps.get(l), 0.0);
        }
        net.run(s, t);

        // Read allocations back off the flow->link edges.
        for (fi, &f) in flows_with_backlog.iter().enumerate() {
            for e in &net.graph[1 + fi] {
                if e.to > nf && e.to < t && e.cost < 0.0 {
                    let shipped = (u64::MAX / 4) - e.cap;
                    if shipped > 0 {
                        let l = out[e.to - 1 - nf];
                        transmissions.push((l, f, shipped));
                        *data_used.entry(l).or_insert(0) += shipped;
                    }
                }
            }
        }
    }

    transmissions.sort_unstable_by_key(|&(l, f, _)| (l, f));

    // Fill every remaining unit of active capacity with cover traffic.
    let mut dummies = Vec::new();
    if params.v > 0.0 {
        for &l in &links {
            let used = data_used.get(&l).copied().unwrap_or(0);
            let cap = caps.get(l);
            if cap > used {
                dummies.push((l, cap - used));
            }
        }
    }

    let entropy_injected =
        params.h_dummy * dummies.iter().map(|d| d.1).sum::<u64>() as f64 + params.e_phy_rate;

    RoutingDecision {
        transmissions,
        dummies,
        entropy_injected,
    }
}

/// Advance one slot: apply departures, receptions, deliveries and arrivals.
/// Dummy packets never enter data queues. Returns the new state and the
/// packets delivered at their destinations, `(flow, count)`.
pub fn apply_decision(
    q: &QueueState,
    decision: &RoutingDecision,
    arrivals: &[(NodeId, FlowId, u64)],
    flows: &[FlowSpec],
) -> Result<(QueueState, Vec<(FlowId, u64)>)> {
    // Aggregate departures per (node, flow) and check feasibility against the
    // pre-decision backlog.
    let mut departures: BTreeMap<(NodeId, FlowId), u64> = BTreeMap::new();
    for &(l, f, x) in &decision.transmissions {
        *departures.entry((l.from, f)).or_insert(0) += x;
    }
    for (&(node, flow), &x) in &departures {
        let have = q.get(node, flow);
        if x > have {
            return Err(Error::Internal(format!(
                "decision ships {x} packets of {flow} from {node} but only {have} queued"
            )));
        }
    }

    let mut next = q.clone();
    next.slot = q.slot + 1;
    let mut delivered: BTreeMap<FlowId, u64> = BTreeMap::new();
    for (&(node, flow), &x) in &departures {
        next.backlog[node.0][flow.0] -= x;
    }
    for &(l, f, x) in &decision.transmissions {
        if l.to.0 == flows[f.0].dst {
            *delivered.entry(f).or_insert(0) += x;
        } else {
            next.backlog[l.to.0][f.0] += x;
        }
    }
    for &(node, flow, x) in arrivals {
        if node.0 == flows[flow.0].dst {
            continue; // arrivals at the destination are already home
        }
        next.backlog[node.0][flow.0] += x;
    }
    Ok((next, delivered.into_iter().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub max_total_backlog: u64,
    pub time_avg_backlog: f64,
    /// Least-squares slope of total backlog over the last half of the run,
    /// packets per slot.
    pub trend_slope: f64,
}

/// Stability telemetry over a per-slot total-backlog series.
pub fn stability_report(series: &[u64]) -> Result<StabilityReport> {
    if series.len() < 100 {
        return Err(Error::Domain(format!(
            "stability_report needs ≥ 100 slots (got {})",
            series.len()
        )));
    }
    let max_total_backlog = series.iter().copied().max().unwrap_or(0);
    let time_avg_backlog = series.iter().sum::<u64>() as f64 / series.len() as f64;
    let tail = &series[series.len() / 2..];
    let n = tail.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = tail.iter().sum::<u64>() as f64 / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in tail.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y as f64 - mean_y);
        den += dx * dx;
    }
    Ok(StabilityReport {
        max_total_backlog,
        time_avg_backlog,
        trend_slope: num / den,
    })
}
