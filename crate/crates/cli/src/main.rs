//! `cidp` — drive the anonymity-stack simulator from a scenario file.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cidp_core::adversary::{delta_floor, detection_sweep, DetectionMode, TrilemmaInputs};
use cidp_core::config::{parse_config, ScenarioConfig};
use cidp_core::metrics::{compare, write_comparison, write_detection_csv};
use cidp_core::sim::{run, Mode, RunOptions};
use cidp_core::sltm;
use cidp_core::trace::{write_jsonl, TraceMask};

#[derive(Parser)]
#[command(name = "cidp", version, about = "Cross-layer anonymity stack simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cidp,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cidp => Mode::Cidp,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    /// Every event kind (dummy events dominate the file size).
    Full,
    /// Hold and deliver events only.
    Jitter,
    Off,
}

impl From<TraceArg> for TraceMask {
    fn from(t: TraceArg) -> Self {
        match t {
            TraceArg::Full => TraceMask::all(),
            TraceArg::Jitter => TraceMask::jitter(),
            TraceArg::Off => TraceMask::none(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one replication and write trace.jsonl + ledger.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        /// Replication index (selects the random streams).
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Which event kinds to record in trace.jsonl.
        #[arg(long, value_enum, default_value_t = TraceArg::Full)]
        trace: TraceArg,
    },
    /// Paired CIDP-vs-baseline comparison over several replications.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Replications; defaults to the scenario's sim.replications.
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the sidelobe design and write pattern.csv + design.json.
    SltmDesign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Radiometer detection-probability sweep for both emission modes.
    Detect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the augmented trilemma bound's delta floor.
    Bound {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        ephy: f64,
    },
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    Ok(parse_config(&text)?)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            mode,
            out,
            replication,
            trace,
        } => {
            let cfg = load_config(&config)?;
            let opts = RunOptions {
                trace_mask: trace.into(),
            };
            let sim = run(&cfg, mode.into(), replication, &opts)?;
            fs::create_dir_all(&out)?;
            let mut trace_file = fs::File::create(out.join("trace.jsonl"))?;
            write_jsonl(&sim.trace, &mut trace_file)?;
            let ledger = serde_json::json!({
                "config_hash": sim.config_hash,
                "mode": sim.mode,
                "replication": sim.replication,
                "ledger": sim.ledger,
            });
            fs::write(out.join("ledger.json"), serde_json::to_string_pretty(&ledger)?)?;
            println!(
                "wrote {} events, {} delivered data packets to {}",
                sim.trace.len(),
                sim.ledger.delivered_data_pkts,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare { config, reps, out } => {
            let cfg = load_config(&config)?;
            let reps = reps.unwrap_or(cfg.sim.replications);
            let cmp = compare(&cfg, reps)?;
            write_comparison(&cmp, &out)?;
            for row in &cmp.report.rows {
                println!(
                    "{:<24} baseline {:>10.4}  cidp {:>10.4}  delta {:>+9.4}",
                    row.metric, row.baseline, row.cidp, row.delta
                );
            }
            if cmp.report.orderings.all_hold() {
                println!("orderings hold");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("ordering check failed: {:?}", cmp.report.orderings);
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::SltmDesign { config, out } => {
            let cfg = load_config(&config)?;
            let problem = sltm::build_problem(&cfg)?;
            let design = sltm::design(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("design.json"),
                serde_json::to_string_pretty(&design)?,
            )?;
            // Angular sweep: per-sub-slot magnitudes and the time average.
            let mut csv = String::new();
            csv.push_str(&format!("# config_hash {}\n", cfg.config_hash()));
            csv.push_str("theta_deg,f_avg");
            for k in 0..design.schedule.len() {
                csv.push_str(&format!(",f_sub_{k:02}"));
            }
            csv.push('\n');
            // The pattern is linear in the weights, so the time-averaged
            // gain is the gain of the duty-cycle vector.
            let k_total = design.schedule.len() as f64;
            let s_avg: Vec<f64> = (0..cfg.sltm.m_elements)
                .map(|m| {
                    design.schedule.iter().filter(|sel| sel[m]).count() as f64 / k_total
                })
                .collect();
            let mut theta = -90.0;
            while theta <= 90.0 + 1e-9 {
                let mags: Vec<f64> = design
                    .schedule
                    .iter()
                    .map(|sel| sltm::pattern_binary(sel, &problem.array, theta).norm())
                    .collect();
                let avg = sltm::pattern(&s_avg, &problem.array, theta).norm();
                csv.push_str(&format!("{theta},{avg}"));
                for m in mags {
                    csv.push_str(&format!(",{m}"));
                }
                csv.push('\n');
                theta += cfg.sltm.grid_step_deg;
            }
            fs::write(out.join("pattern.csv"), csv)?;
            println!(
                "eta_star = {:.6}, certificate = {:.3e}, e_phy = {:.3} bits",
                design.eta_star, design.kkt_residual, design.e_phy_bits
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Detect { config, out } => {
            let cfg = load_config(&config)?;
            let design = sltm::design(&cfg)?;
            let baseline = detection_sweep(&cfg, DetectionMode::StaticBaseline, &design.schedule)?;
            let cidp = detection_sweep(&cfg, DetectionMode::CidpSltm, &design.schedule)?;
            fs::create_dir_all(&out)?;
            write_detection_csv(
                &[baseline.clone(), cidp.clone()],
                &cfg.config_hash(),
                &out.join("detection.csv"),
            )?;
            for (b, c) in baseline.points.iter().zip(&cidp.points) {
                println!(
                    "snr {:>6.1} dB: baseline {:.4}  cidp {:.4}",
                    b.snr_db, b.p_d, c.p_d
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bound {
            tau,
            beta,
            lambda,
            gamma,
            ephy,
        } => {
            let floor = delta_floor(&TrilemmaInputs {
                tau,
                beta,
                lambda,
                gamma,
                e_phy: ephy,
            })?;
            println!("{floor}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
