//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible with `--nocapture`; the harness line itself
//! is the per-criterion verdict).
//!
//! Run with `cargo test -p cidp-cli --test acceptance`.

// Index loops mirror the matrix notation in the oracle kernels.
#![allow(clippy::needless_range_loop)]

mod oracles;

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cidp_core::adversary::{
    delta_floor, detection_sweep, sender_posterior, DetectionMode, SenderModel, TrilemmaInputs,
};
use cidp_core::config::{parse_config, ScenarioConfig};
use cidp_core::ids::{FlowId, Link, NodeId};
use cidp_core::jitter::{verify_invariance, JitterState};
use cidp_core::metrics::{compliance, percentile_nearest_rank, saet, MetricsLedger};
use cidp_core::router::{decide_slot, Capacities, QueueState, RouterParams};
use cidp_core::sim::{run, Mode, RunOptions};
use cidp_core::sltm;
use cidp_core::trace::{EventKind, TraceMask};

const REPLICATIONS: u64 = 10;

struct Experiment {
    cfg: ScenarioConfig,
    baseline: Vec<MetricsLedger>,
    cidp: Vec<MetricsLedger>,
    rt_deliveries_cidp: u64,
    chains_checked: u64,
    barrier_violation: Option<String>,
    wall: Duration,
}

fn experiment() -> &'static Experiment {
    static CELL: OnceLock<Experiment> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ScenarioConfig::paper_scenario();
        let start = Instant::now();
        // Replications run concurrently on disjoint streams; everything
        // below consumes them in replication order.
        let mut slots: Vec<Option<(cidp_core::sim::SimulationRun, cidp_core::sim::SimulationRun)>> =
            (0..REPLICATIONS).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (rep, slot) in slots.iter_mut().enumerate() {
                let cfg = &cfg;
                scope.spawn(move || {
                    let b = run(cfg, Mode::Baseline, rep as u64, &RunOptions::default())
                        .expect("baseline replication");
                    let c = run(
                        cfg,
                        Mode::Cidp,
                        rep as u64,
                        &RunOptions {
                            trace_mask: TraceMask::jitter(),
                        },
                    )
                    .expect("cidp replication");
                    *slot = Some((b, c));
                });
            }
        });
        let mut baseline = Vec::new();
        let mut cidp = Vec::new();
        let mut rt_deliveries = 0u64;
        let mut chains = 0u64;
        let mut violation = None;
        for slot in slots {
            let (b, c) = slot.expect("every replication ran");
            baseline.push(b.ledger);
            for (fi, f) in cfg.flows.iter().enumerate() {
                if f.realtime {
                    rt_deliveries += c.ledger.delivered_per_flow[fi];
                }
            }
            // Reconstruct every packet's barrier chain from hold events and
            // check the per-step decrease condition.
            let mut chains_map: BTreeMap<(usize, u64), Vec<(u64, f64)>> = BTreeMap::new();
            for ev in &c.trace {
                if ev.kind != EventKind::Hold {
                    continue;
                }
                let flow = ev.flow.expect("hold events carry a flow").0;
                let seq = ev.payload["seq"] as u64;
                let hop = ev.payload["hop"] as u64;
                chains_map
                    .entry((flow, seq))
                    .or_default()
                    .push((hop, ev.payload["d_ms"]));
            }
            for ((flow, seq), mut hops) in chains_map {
                hops.sort_unstable_by_key(|&(h, _)| h);
                let mut chain = vec![JitterState::fresh(FlowId(flow), cfg.control.dmax_ms)];
                for (_, d_ms) in hops {
                    chain.push(JitterState {
                        flow: FlowId(flow),
                        d_ms,
                        dmax_ms: cfg.control.dmax_ms,
                    });
                }
                let rep_ok = verify_invariance(&chain, cfg.control.alpha);
                if !rep_ok.ok && violation.is_none() {
                    violation = Some(format!(
                        "flow {flow} seq {seq}: {:?}",
                        rep_ok.first_violation
                    ));
                }
                chains += 1;
            }
            cidp.push(c.ledger);
        }
        Experiment {
            cfg,
            baseline,
            cidp,
            rt_deliveries_cidp: rt_deliveries,
            chains_checked: chains,
            barrier_violation: violation,
            wall: start.elapsed(),
        }
    })
}

fn pooled_jitter(ledgers: &[MetricsLedger]) -> Vec<f64> {
    let mut all: Vec<f64> = ledgers
        .iter()
        .flat_map(|l| l.all_jitter_samples())
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all
}

fn pooled_anonymity_median(ledgers: &[MetricsLedger]) -> f64 {
    let mut all: Vec<f64> = ledgers
        .iter()
        .flat_map(|l| l.anonymity_set_sizes())
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile_nearest_rank(&all, 0.5)
}

#[test]
fn acceptance_01_jitter_safety() {
    let exp = experiment();
    assert!(
        exp.rt_deliveries_cidp >= 100_000,
        "need >= 1e5 real-time deliveries, got {}",
        exp.rt_deliveries_cidp
    );
    for (rep, ledger) in exp.cidp.iter().enumerate() {
        let comp = compliance(ledger, exp.cfg.control.dmax_ms).unwrap();
        assert_eq!(comp, 1.0, "replication {rep} compliance {comp} != 100%");
    }
    assert!(
        exp.barrier_violation.is_none(),
        "barrier step condition violated: {:?}",
        exp.barrier_violation
    );
    assert!(exp.chains_checked >= exp.rt_deliveries_cidp);
    assert!(
        exp.wall < Duration::from_secs(120),
        "experiment took {:?}, over the 2 min target",
        exp.wall
    );
    println!(
        "CRITERION 1 (jitter safety): PASS — {} rt deliveries, compliance 100% in all {} reps, \
         h(t+1) >= (1-alpha) h(t) across {} chains, wall {:?}",
        exp.rt_deliveries_cidp,
        REPLICATIONS,
        exp.chains_checked,
        exp.wall
    );
}

#[test]
fn acceptance_02_baseline_violation() {
    let exp = experiment();
    let samples = pooled_jitter(&exp.baseline);
    let within = samples
        .iter()
        .filter(|&&s| s <= exp.cfg.control.dmax_ms)
        .count();
    let comp = within as f64 / samples.len() as f64;
    let p99 = percentile_nearest_rank(&samples, 0.99);
    assert!(comp < 1.0, "baseline compliance {comp} should be < 100%");
    assert!(
        p99 > exp.cfg.control.dmax_ms,
        "baseline p99 {p99} ms should exceed D_max"
    );
    // Regression brackets around the recorded first-run values
    // (compliance ~0.948, p99 ~35.9 ms).
    assert!((0.85..1.0).contains(&comp), "compliance drifted: {comp}");
    assert!((30.0..60.0).contains(&p99), "p99 drifted: {p99}");
    println!(
        "CRITERION 2 (baseline violation): PASS — compliance {:.4}, p99 {:.2} ms \
         (recorded as regression baselines)",
        comp, p99
    );
}

fn stability_cfg(rate_pkts_per_s: f64) -> ScenarioConfig {
    let mut cfg = parse_config(
        r#"{
          "network": {"n_nodes": 4, "area_m": 30.0, "gamma0_db": 5.0,
                      "tx_power_dbm": 10.0, "noise_dbm": -60.0,
                      "rician_k_db": 12.0, "pathloss_exponent": 2.0,
                      "link_capacity": 1},
          "flows": [
            {"src": 0, "dst": 3, "realtime": false},
            {"src": 1, "dst": 2, "realtime": false}
          ],
          "sim": {"n_slots": 10000, "slot_ms": 1.0, "seed": 911, "replications": 1}
        }"#,
    )
    .unwrap();
    for f in &mut cfg.flows {
        f.rate_pkts_per_s = rate_pkts_per_s;
    }
    cfg
}

#[test]
fn acceptance_03_queue_stability() {
    // Complete 4-node graph, unit capacities: min cut 3 packets/slot per
    // flow. Admissible load = 50% of that; overload = 120%.
    let admissible = stability_cfg(1500.0);
    let sim = run(&admissible, Mode::Cidp, 0, &RunOptions::default()).unwrap();
    let report = cidp_core::router::stability_report(&sim.ledger.backlog_series).unwrap();
    assert!(
        report.trend_slope.abs() < 0.01,
        "admissible slope {} packets/slot",
        report.trend_slope
    );
    // Boundedness regression: the theory guarantees some bound exists; the
    // recorded first-run average is ~7.8 packets.
    assert!(
        report.time_avg_backlog < 40.0,
        "admissible time-average backlog {} drifted",
        report.time_avg_backlog
    );

    let overloaded = stability_cfg(3600.0);
    let sim_over = run(&overloaded, Mode::Cidp, 0, &RunOptions::default()).unwrap();
    let over = cidp_core::router::stability_report(&sim_over.ledger.backlog_series).unwrap();
    assert!(
        over.trend_slope > 0.0,
        "overload slope {} should be positive",
        over.trend_slope
    );
    println!(
        "CRITERION 3 (queue stability): PASS — admissible slope {:.5}, avg backlog {:.1}; \
         overload slope {:.3}",
        report.trend_slope, report.time_avg_backlog, over.trend_slope
    );
}

#[test]
fn acceptance_04_backpressure_lp_equivalence() {
    use rand::Rng;
    let mut rng = cidp_core::rng::make_rng(1234, "acceptance:bruteforce");
    let v_grid = [0.0, 0.25, 0.5, 1.0, 2.0];
    let mut checked = 0usize;
    for instance in 0..250 {
        let n_nodes = 2 + (rng.random::<u64>() % 3) as usize; // 2..=4
        let n_flows = 1 + (rng.random::<u64>() % 2) as usize; // 1..=2
        let mut flows = Vec::new();
        for _ in 0..n_flows {
            let src = (rng.random::<u64>() % n_nodes as u64) as usize;
            let mut dst = (rng.random::<u64>() % n_nodes as u64) as usize;
            if dst == src {
                dst = (dst + 1) % n_nodes;
            }
            flows.push((src, dst));
        }
        let mut q = QueueState::new(n_nodes, n_flows);
        for node in 0..n_nodes {
            for (fi, &(_, dst)) in flows.iter().enumerate() {
                if node != dst {
                    q.backlog[node][fi] = rng.random::<u64>() % 6;
                }
            }
        }
        let mut links = Vec::new();
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                if i != j && rng.random::<f64>() < 0.4 && links.len() < 6 {
                    links.push(Link::new(i, j));
                }
            }
        }
        if links.is_empty() {
            continue;
        }
        let v = v_grid[instance % v_grid.len()];
        let params = RouterParams {
            v,
            h_dummy: 1.0,
            e_phy_rate: 0.0,
        };
        let decision = decide_slot(&q, &links, &Capacities::uniform(1), &params);
        let got = decision.objective(&q, v, 1.0);
        let best = oracles::brute_force_slot_optimum(&q, &links, 1, v * 1.0);
        assert!(
            got == best,
            "instance {instance}: decide_slot objective {got} != brute force {best} \
             (links {links:?}, backlog {:?}, V {v})",
            q.backlog
        );
        checked += 1;
    }
    assert!(checked >= 200, "only {checked} non-trivial instances");
    println!(
        "CRITERION 4 (backpressure/LP equivalence): PASS — {checked} random instances \
         matched the brute-force optimum exactly"
    );
}

#[test]
fn acceptance_05_socp_optimality() {
    use rand::Rng;
    // Small instances against the ellipsoid oracle.
    let mut worst_rel = 0.0f64;
    for m in 3..=10 {
        let mut cfg = parse_config(r#"{"network": {"n_nodes": 2}, "flows": []}"#).unwrap();
        cfg.sltm.m_elements = m;
        cfg.sltm.grid_step_deg = 15.0;
        cfg.sltm.mask_exclusion_deg = 10.0;
        let p = sltm::build_problem(&cfg).unwrap();
        let design = sltm::solve_socp(&p, 1e-8).unwrap();
        let oracle = oracles::ellipsoid_min_eta(&p, 120_000);
        let rel = (design.eta_star - oracle).abs() / oracle.max(1.0);
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 1e-4,
            "M={m}: eta {} vs ellipsoid {} (rel {rel})",
            design.eta_star,
            oracle
        );
        // Feasibility residuals of the returned point.
        let main: f64 = p.a0_re.iter().zip(&design.s_relaxed).map(|(c, s)| c * s).sum();
        assert!(main >= p.rho * m as f64 - 1e-6);
        for &s in &design.s_relaxed {
            assert!((-1e-6..=1.0 + 1e-6).contains(&s));
        }
        assert!(design.kkt_residual <= 1e-8);
    }

    // Convex-combination inequality on 1e3 random pairs (16-element instance).
    let cfg = ScenarioConfig::paper_scenario();
    let p = sltm::build_problem(&cfg).unwrap();
    let mut rng = cidp_core::rng::make_rng(77, "acceptance:convexity");
    for _ in 0..1000 {
        let s1: Vec<f64> = (0..p.m).map(|_| rng.random::<f64>()).collect();
        let s2: Vec<f64> = (0..p.m).map(|_| rng.random::<f64>()).collect();
        let lam: f64 = rng.random();
        let mix: Vec<f64> = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| lam * a + (1.0 - lam) * b)
            .collect();
        let lhs = sltm::max_masked_magnitude(&p, &mix);
        let rhs = lam * sltm::max_masked_magnitude(&p, &s1)
            + (1.0 - lam) * sltm::max_masked_magnitude(&p, &s2);
        assert!(lhs <= rhs + 1e-9);
    }

    // M = 16 solve time (relaxed CI bound; the tight target is well under
    // a millisecond in release builds).
    let mut times = Vec::new();
    for _ in 0..12 {
        let t = Instant::now();
        let d = sltm::solve_socp(&p, cfg.sltm.tol).unwrap();
        times.push(t.elapsed());
        assert!(d.eta_star > 0.0);
    }
    times.sort();
    let median = times[times.len() / 2];
    assert!(
        median < Duration::from_millis(10),
        "median M=16 solve took {median:?}"
    );
    println!(
        "CRITERION 5 (SOCP optimality): PASS — worst ellipsoid gap {worst_rel:.2e}, \
         1e3 convexity pairs hold, median M=16 solve {median:?}"
    );
}

#[test]
fn acceptance_06_detection_ordering() {
    let cfg = ScenarioConfig::paper_scenario();
    assert!(cfg.adversary.mc_trials >= 10_000);
    assert_eq!(cfg.adversary.pfa, 0.05);
    let design = sltm::design(&cfg).unwrap();
    let base = detection_sweep(&cfg, DetectionMode::StaticBaseline, &design.schedule).unwrap();
    let cidp = detection_sweep(&cfg, DetectionMode::CidpSltm, &design.schedule).unwrap();
    let mut lines = Vec::new();
    for (b, c) in base.points.iter().zip(&cidp.points) {
        let se = 2.0 * (b.stderr.powi(2) + c.stderr.powi(2)).sqrt();
        assert!(
            c.p_d <= b.p_d + se,
            "at {} dB cidp {} exceeds baseline {} (+2se {se})",
            b.snr_db,
            c.p_d,
            b.p_d
        );
        lines.push(format!("{} dB: {:.3} vs {:.3}", b.snr_db, b.p_d, c.p_d));
    }
    for curve in [&base, &cidp] {
        for w in curve.points.windows(2) {
            let se = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            assert!(
                w[1].p_d >= w[0].p_d - se,
                "{:?} not monotone at {} dB",
                curve.mode,
                w[1].snr_db
            );
        }
    }
    println!(
        "CRITERION 6 (detection ordering): PASS — baseline vs cidp P_d: {} \
         (recorded as regression values)",
        lines.join(", ")
    );
}

#[test]
fn acceptance_07_anonymity_gain() {
    let exp = experiment();
    let med_base = pooled_anonymity_median(&exp.baseline);
    let med_cidp = pooled_anonymity_median(&exp.cidp);
    assert!(
        med_cidp >= 1.2 * med_base,
        "median anonymity {med_cidp} not >= 1.2 * {med_base}"
    );

    // Exact posteriors for the degenerate cases.
    let n = 16;
    let uniform = sender_posterior(
        &SenderModel {
            receiver: NodeId(0),
            q_point: vec![0.4; n],
            q_rand: vec![0.4; n],
        },
        &[vec![false; n], vec![true; n]],
        &vec![true; n],
    );
    assert!((uniform.effective_set_size - n as f64).abs() < 1e-9);
    let mut obs = vec![vec![false; n]; 4];
    for row in &mut obs {
        row[5] = true;
    }
    let point = sender_posterior(
        &SenderModel {
            receiver: NodeId(0),
            q_point: vec![1.0; n],
            q_rand: vec![0.0; n],
        },
        &obs,
        &vec![true; n],
    );
    assert!((point.effective_set_size - 1.0).abs() < 1e-12);
    println!(
        "CRITERION 7 (anonymity gain): PASS — median set size cidp {med_cidp:.2} vs \
         baseline {med_base:.2} (ratio {:.2}); uniform -> {n}, point mass -> 1 exactly",
        med_cidp / med_base
    );
}

#[test]
fn acceptance_08_saet() {
    let exp = experiment();
    let mean = |ledgers: &[MetricsLedger]| {
        ledgers.iter().map(|l| saet(l).unwrap()).sum::<f64>() / ledgers.len() as f64
    };
    let base = mean(&exp.baseline);
    let cidp = mean(&exp.cidp);
    assert!(base >= 0.98, "baseline SAET {base}");
    assert!(cidp >= 0.90, "cidp SAET {cidp}");
    println!("CRITERION 8 (SAET): PASS — baseline {base:.4}, cidp {cidp:.4}");
}

#[test]
fn acceptance_09_bound_calculator() {
    let f = |tau, beta, lambda, gamma, e_phy| {
        delta_floor(&TrilemmaInputs {
            tau,
            beta,
            lambda,
            gamma,
            e_phy,
        })
        .unwrap()
    };
    // The three tabulated triples, exactly.
    assert_eq!(f(1.0, 0.0, 0.0, 1.0, 0.0), 1.0);
    assert_eq!(f(1.0, 0.25, 0.25, 1.0, 0.0), 0.0);
    assert_eq!(f(1.0, 0.0, 0.0, 1.0, 1.0), 0.0);
    // Monotone non-increasing in each protective input on a 10^3 grid.
    let grid: Vec<f64> = (0..10).map(|i| i as f64 * 0.08).collect();
    let mut points = 0usize;
    for &beta in &grid {
        for &lambda in &grid {
            for &e in &grid {
                let d = f(1.0, beta, lambda, 0.5, e);
                let eps = 0.04;
                assert!(f(1.0, (beta + eps).min(1.0), lambda, 0.5, e) <= d);
                assert!(f(1.0, beta, lambda + eps, 0.5, e) <= d);
                assert!(f(1.0, beta, lambda, 0.5, e + eps) <= d);
                points += 1;
            }
        }
    }
    assert_eq!(points, 1000);
    println!(
        "CRITERION 9 (bound calculator): PASS — tabulated triples exact, monotone over \
         {points} grid points"
    );
}

#[test]
fn acceptance_10_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_cidp");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scenario.json");
    std::fs::write(
        &cfg_path,
        r#"{
          "network": {"n_nodes": 6, "area_m": 200.0, "gamma0_db": 12.0,
                      "tx_power_dbm": 10.0, "noise_dbm": -55.0,
                      "rician_k_db": 8.0, "pathloss_exponent": 2.5,
                      "link_capacity": 1},
          "flows": [
            {"src": 0, "dst": 5, "rate_pkts_per_s": 50.0, "period_ms": 20.0, "realtime": true},
            {"src": 1, "dst": 4, "rate_pkts_per_s": 100.0, "period_ms": 10.0, "realtime": false}
          ],
          "sltm": {"m_elements": 8, "subslots": 16},
          "adversary": {"snr_grid_db": [-10.0, 0.0, 10.0], "mc_trials": 1000,
                         "window_samples": 50},
          "sim": {"n_slots": 2000, "slot_ms": 1.0, "seed": 5150, "replications": 2}
        }"#,
    )
    .unwrap();

    let invocations: Vec<Vec<String>> = vec![
        vec![
            "run".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--mode".into(),
            "cidp".into(),
            "--out".into(),
            String::new(), // filled per pass
        ],
        vec![
            "sltm-design".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--out".into(),
            String::new(),
        ],
        vec![
            "detect".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--out".into(),
            String::new(),
        ],
        vec![
            "compare".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--reps".into(),
            "1".into(),
            "--out".into(),
            String::new(),
        ],
    ];

    let mut compared_files = 0usize;
    for (ci, args_template) in invocations.iter().enumerate() {
        let mut outputs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for pass in 0..2 {
            let out_dir = dir.path().join(format!("cmd{ci}_pass{pass}"));
            let mut args = args_template.clone();
            *args.last_mut().unwrap() = out_dir.display().to_string();
            let status = Command::new(bin)
                .args(&args)
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status()
                .expect("spawn cidp binary");
            assert!(status.success(), "command {args:?} failed");
            let mut files = BTreeMap::new();
            for entry in std::fs::read_dir(&out_dir).unwrap() {
                let entry = entry.unwrap();
                files.insert(
                    entry.file_name().to_string_lossy().into_owned(),
                    std::fs::read(entry.path()).unwrap(),
                );
            }
            assert!(!files.is_empty());
            outputs.push(files);
        }
        let names: Vec<&String> = outputs[0].keys().collect();
        for name in names {
            assert_eq!(
                outputs[0][name], outputs[1][name],
                "command {ci}: {name} differs between identical runs"
            );
            compared_files += 1;
        }
    }

    // `bound` prints to stdout; compare that too.
    let bound_out = |_: usize| {
        Command::new(bin)
            .args(["bound", "--tau", "1", "--beta", "0.1", "--lambda", "0.05", "--gamma", "0.1", "--ephy", "1.5"])
            .output()
            .expect("spawn cidp bound")
    };
    let a = bound_out(0);
    let b = bound_out(1);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    println!(
        "CRITERION 10 (determinism): PASS — {compared_files} output files byte-identical \
         across repeated runs of every command"
    );
}
