//! Evaluation metrics and comparison artifacts: jitter CDF and compliance,
//! SAET, anonymity-set CDF, and the paired CIDP-vs-baseline report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AnonymityPosterior, DetectionCurve};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::sim::{run, Mode, RunOptions};

/// Everything a replication records for later aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLedger {
    /// Per-flow end-to-end jitter samples, ms. A sample is
    /// `|inter-delivery gap - period|` for consecutive (by sequence number)
    /// delivered packet pairs of a real-time flow.
    pub jitter_samples_ms: Vec<Vec<f64>>,
    pub delivered_data_pkts: u64,
    pub delivered_dummy_pkts: u64,
    /// Data packets that entered the network (the SAET denominator).
    pub nominal_pkts: u64,
    pub arrived_per_flow: Vec<u64>,
    pub delivered_per_flow: Vec<u64>,
    pub anonymity_posteriors: Vec<AnonymityPosterior>,
    pub detection_curves: Option<Vec<DetectionCurve>>,
    /// Total queued data packets after each slot.
    pub backlog_series: Vec<u64>,
    /// Sum of per-slot injected entropy, bits.
    pub entropy_bits_total: f64,
}

impl MetricsLedger {
    pub fn new(n_flows: usize) -> Self {
        Self {
            jitter_samples_ms: vec![Vec::new(); n_flows],
            delivered_data_pkts: 0,
            delivered_dummy_pkts: 0,
            nominal_pkts: 0,
            arrived_per_flow: vec![0; n_flows],
            delivered_per_flow: vec![0; n_flows],
            anonymity_posteriors: Vec::new(),
            detection_curves: None,
            backlog_series: Vec::new(),
            entropy_bits_total: 0.0,
        }
    }

    pub fn all_jitter_samples(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.jitter_samples_ms.iter().flatten().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite jitter"));
        v
    }

    pub fn anonymity_set_sizes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .anonymity_posteriors
            .iter()
            .map(|p| p.effective_set_size)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite set sizes"));
        v
    }
}

/// Empirical CDF of a sorted sample: one `(value, cumulative fraction)` step
/// per distinct value.
pub fn empirical_cdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n as f64;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    out
}

/// Nearest-rank percentile of a sorted sample, `p` in (0, 1].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Jitter CDF over all real-time deliveries.
pub fn jitter_cdf(ledger: &MetricsLedger) -> Result<Vec<(f64, f64)>> {
    let samples = ledger.all_jitter_samples();
    if samples.is_empty() {
        return Err(Error::NoRealtimeDeliveries);
    }
    Ok(empirical_cdf(&samples))
}

/// Fraction of jitter samples within the bound; equals the CDF at `dmax`.
pub fn compliance(ledger: &MetricsLedger, dmax_ms: f64) -> Result<f64> {
    let samples = ledger.all_jitter_samples();
    if samples.is_empty() {
        return Err(Error::NoRealtimeDeliveries);
    }
    let within = samples.iter().filter(|&&s| s <= dmax_ms).count();
    Ok(within as f64 / samples.len() as f64)
}

/// Secrecy-adjusted effective throughput: delivered data over nominal data.
/// Dummies never count toward the numerator.
pub fn saet(ledger: &MetricsLedger) -> Result<f64> {
    if ledger.nominal_pkts == 0 {
        return Err(Error::Domain("saet undefined with no nominal packets".into()));
    }
    Ok(ledger.delivered_data_pkts as f64 / ledger.nominal_pkts as f64)
}

/// Anonymity-set CDF and its nearest-rank median.
pub fn anonymity_cdf(ledger: &MetricsLedger) -> Result<(Vec<(f64, f64)>, f64)> {
    let sizes = ledger.anonymity_set_sizes();
    if sizes.is_empty() {
        return Err(Error::Domain("no anonymity posteriors recorded".into()));
    }
    let median = percentile_nearest_rank(&sizes, 0.5);
    Ok((empirical_cdf(&sizes), median))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub baseline: f64,
    pub cidp: f64,
    /// cidp - baseline, averaged over paired replications.
    pub delta: f64,
    /// Standard error of the paired delta; absent with one replication.
    pub delta_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingChecks {
    pub cidp_compliance_is_total: bool,
    pub anonymity_ordering_holds: bool,
}

impl OrderingChecks {
    pub fn all_hold(&self) -> bool {
        self.cidp_compliance_is_total && self.anonymity_ordering_holds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub replications: u64,
    pub rows: Vec<MetricRow>,
    pub orderings: OrderingChecks,
}

/// A full paired comparison: the report plus pooled per-mode samples for the
/// CDF artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub pooled_jitter: [Vec<f64>; 2],
    pub pooled_anonymity: [Vec<f64>; 2],
}

fn mode_index(mode: Mode) -> usize {
    match mode {
        Mode::Baseline => 0,
        Mode::Cidp => 1,
    }
}

/// Run `replications` paired replications of both modes and aggregate the
/// four headline metrics plus 99th-percentile jitter. Replications execute
/// concurrently on disjoint random streams; results merge in replication
/// order, so the report does not depend on scheduling.
pub fn compare(cfg: &ScenarioConfig, replications: u64) -> Result<Comparison> {
    if replications < 1 {
        return Err(Error::Domain("compare needs ≥ 1 replication".into()));
    }
    let mut runs: Vec<Option<Result<MetricsLedger>>> =
        (0..replications * 2).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot_idx, slot) in runs.iter_mut().enumerate() {
            scope.spawn(move || {
                let rep = (slot_idx / 2) as u64;
                let mode = if slot_idx % 2 == 0 {
                    Mode::Baseline
                } else {
                    Mode::Cidp
                };
                *slot = Some(run(cfg, mode, rep, &RunOptions::default()).map(|s| s.ledger));
            });
        }
    });

    let mut per_rep: [Vec<[f64; 4]>; 2] = [Vec::new(), Vec::new()];
    let mut pooled_jitter: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut pooled_anonymity: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (slot_idx, slot) in runs.into_iter().enumerate() {
        let ledger = slot.expect("every replication ran")?;
        let idx = if slot_idx % 2 == 0 {
            mode_index(Mode::Baseline)
        } else {
            mode_index(Mode::Cidp)
        };
        let samples = ledger.all_jitter_samples();
        if samples.is_empty() {
            return Err(Error::NoRealtimeDeliveries);
        }
        let p99 = percentile_nearest_rank(&samples, 0.99);
        let comp = compliance(&ledger, cfg.control.dmax_ms)?;
        let (_, median) = anonymity_cdf(&ledger)?;
        let s = saet(&ledger)?;
        per_rep[idx].push([p99, comp, median, s]);
        pooled_jitter[idx].extend(samples);
        pooled_anonymity[idx].extend(ledger.anonymity_set_sizes());
    }
    for side in pooled_jitter.iter_mut().chain(pooled_anonymity.iter_mut()) {
        side.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    }

    let names = [
        "jitter_p99_ms",
        "jitter_compliance",
        "median_anonymity_set",
        "saet",
    ];
    let mut rows = Vec::new();
    for (mi, name) in names.iter().enumerate() {
        let base: Vec<f64> = per_rep[0].iter().map(|r| r[mi]).collect();
        let cidp: Vec<f64> = per_rep[1].iter().map(|r| r[mi]).collect();
        let n = base.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let deltas: Vec<f64> = cidp.iter().zip(&base).map(|(c, b)| c - b).collect();
        let dmean = mean(&deltas);
        let delta_stderr = if deltas.len() > 1 {
            let var =
                deltas.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / (n - 1.0);
            Some((var / n).sqrt())
        } else {
            None
        };
        rows.push(MetricRow {
            metric: name.to_string(),
            baseline: mean(&base),
            cidp: mean(&cidp),
            delta: dmean,
            delta_stderr,
        });
    }

    let cidp_compliance = rows[1].cidp;
    let orderings = OrderingChecks {
        cidp_compliance_is_total: cidp_compliance == 1.0,
        anonymity_ordering_holds: rows[2].cidp > rows[2].baseline,
    };
    Ok(Comparison {
        report: ComparisonReport {
            config_hash: cfg.config_hash(),
            replications,
            rows,
            orderings,
        },
        pooled_jitter,
        pooled_anonymity,
    })
}

fn write_cdf_csv(path: &Path, hash: &str, pooled: &[Vec<f64>; 2], value_name: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash {hash}\n"));
    out.push_str(&format!("mode,{value_name},cdf\n"));
    for (mode, samples) in [("baseline", &pooled[0]), ("cidp", &pooled[1])] {
        for (x, f) in empirical_cdf(samples) {
            out.push_str(&format!("{mode},{x},{f}\n"));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Emit `comparison.{json,csv}`, `jitter_cdf.csv` and `anon_cdf.csv`.
pub fn write_comparison(cmp: &Comparison, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let report = &cmp.report;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(out_dir.join("comparison.json"), json)?;

    let mut csv = String::new();
    csv.push_str(&format!("# config_hash {}\n", report.config_hash));
    csv.push_str("metric,baseline,cidp,delta,delta_stderr\n");
    for row in &report.rows {
        let se = row
            .delta_stderr
            .map(|s| s.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.metric, row.baseline, row.cidp, row.delta, se
        ));
    }
    fs::write(out_dir.join("comparison.csv"), csv)?;

    write_cdf_csv(
        &out_dir.join("jitter_cdf.csv"),
        &report.config_hash,
        &cmp.pooled_jitter,
        "jitter_ms",
    )?;
    write_cdf_csv(
        &out_dir.join("anon_cdf.csv"),
        &report.config_hash,
        &cmp.pooled_anonymity,
        "set_size",
    )?;
    Ok(())
}

/// Write one detection curve per row of `detection.csv`.
pub fn write_detection_csv(curves: &[DetectionCurve], hash: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash {hash}\n"));
    out.push_str("mode,snr_db,p_d,stderr\n");
    for curve in curves {
        let mode = match curve.mode {
            crate::adversary::DetectionMode::CidpSltm => "cidp_sltm",
            crate::adversary::DetectionMode::StaticBaseline => "static_baseline",
        };
        for p in &curve.points {
            out.push_str(&format!("{mode},{},{},{}\n", p.snr_db, p.p_d, p.stderr));
        }
    }
    fs::write(path, out)?;
    Ok(())
}
