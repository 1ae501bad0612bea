//! byzsync: scenario validation, deterministic simulation runs and the
//! analytic attack-parameter sweeps, all driven by a single JSON scenario
//! file. Exit codes: 0 success, 2 validation failure, 1 runtime error.

use byzsync::learning::{LearningConfig, LinkParams, NeighborLearner, WindowPoint};
use byzsync::scenario::{validate, ScenarioConfig};
use byzsync::sim::{estimates_csv, run_scenario, trace_csv, windows_csv, EstimateRow};
use byzsync::sweep::{deflection_csv, roc_csv, roc_curve, sweep_deflection, GridSpec};
use byzsync::Hypothesis;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "byzsync", version, about = "Event-triggered multi-agent synchronization under Byzantine attack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file for consistency and trigger-design feasibility.
    Validate { config: PathBuf },
    /// Report connectivity, degrees and per-agent trigger design bounds.
    Design { config: PathBuf },
    /// Run a scenario and write the trace CSV (plus a windows CSV for
    /// offline learning).
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Windows CSV path (default: <out> with a .windows.csv suffix).
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Sweep the deflection coefficient over a (P, Delta) grid.
    Deflection {
        config: PathBuf,
        #[arg(long, value_name = "START:STOP:STEPS")]
        p_grid: String,
        #[arg(long, value_name = "START:STOP:STEPS")]
        delta_grid: String,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate the grid serially instead of on the worker pool.
        #[arg(long)]
        serial: bool,
    },
    /// Detection / false-alarm probabilities over an attack-strength grid.
    Roc {
        config: PathBuf,
        #[arg(long, value_name = "START:STOP:STEPS")]
        delta_grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the learning pipeline over a recorded windows CSV.
    Learn {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Data points per learning iteration.
        #[arg(long, default_value_t = 20)]
        lp: usize,
        #[arg(long, default_value_t = 20)]
        max_iterations: usize,
        /// Only consume windows completed at or after this time.
        #[arg(long, default_value_t = 0.0)]
        t_start: f64,
        /// Only consume windows completed at or before this time.
        #[arg(long, default_value_t = f64::INFINITY)]
        t_end: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(config: &Path) -> Result<ScenarioConfig, String> {
    ScenarioConfig::from_path(config).map_err(|e| e.to_string())
}

fn dispatch(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            match validate(&cfg) {
                Ok(report) => {
                    println!("scenario: {}", cfg.name);
                    println!("lambda(G) = {:.6}", report.lambda_g);
                    println!("balanced: {}", report.balanced);
                    for l in &report.lines {
                        println!(
                            "agent {}: d_in = {}, rho = {}, bound = {}, delta = {}{}",
                            l.agent,
                            l.d_in,
                            l.rho,
                            l.bound
                                .map(|b| format!("{b:.4}"))
                                .unwrap_or_else(|| "infeasible".into()),
                            l.configured,
                            if l.within_bound { "" } else { "  [exceeds bound]" }
                        );
                    }
                    for w in &report.warnings {
                        println!("warning: {w}");
                    }
                    println!("ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Design { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let report = match validate(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            println!("scenario: {}", cfg.name);
            println!("computed lambda(G) = {:.6}", report.lambda_g);
            if let Some(expect) = cfg.expected_lambda {
                println!("scenario-stated lambda = {expect}");
                if (expect - report.lambda_g).abs() > 0.01 {
                    println!(
                        "note: stated connectivity differs from the symmetric-part eigenvalue; \
                         design bounds below use the computed value"
                    );
                }
            }
            println!("balanced: {}", report.balanced);
            for l in &report.lines {
                println!(
                    "agent {}: d_in = {}, rho = {}, design bound = {}, configured delta = {} ({})",
                    l.agent,
                    l.d_in,
                    l.rho,
                    l.bound
                        .map(|b| format!("{b:.6}"))
                        .unwrap_or_else(|| "infeasible".into()),
                    l.configured,
                    if l.within_bound { "ok" } else { "exceeds bound" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            out,
            seed,
            windows,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            if let Err(e) = validate(&cfg) {
                eprintln!("validation failed: {e}");
                return Ok(ExitCode::from(2));
            }
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let trace = run_scenario(&cfg).map_err(|e| e.to_string())?;
            std::fs::write(&out, trace_csv(&trace)).map_err(|e| e.to_string())?;
            let wpath = windows.unwrap_or_else(|| {
                let mut p = out.clone();
                p.set_extension("windows.csv");
                p
            });
            std::fs::write(&wpath, windows_csv(&trace)).map_err(|e| e.to_string())?;
            println!(
                "wrote {} rows to {} and {} windows to {}",
                trace.rows.len(),
                out.display(),
                trace.windows.len(),
                wpath.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Deflection {
            config,
            p_grid,
            delta_grid,
            out,
            serial,
        } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let pg = GridSpec::parse(&p_grid).map_err(|e| e.to_string())?;
            let dg = GridSpec::parse(&delta_grid).map_err(|e| e.to_string())?;
            let rows = sweep_deflection(&cfg, &pg, &dg, !serial).map_err(|e| e.to_string())?;
            std::fs::write(&out, deflection_csv(&rows)).map_err(|e| e.to_string())?;
            println!("wrote {} grid points to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Roc {
            config,
            delta_grid,
            out,
        } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation failed: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let dg = GridSpec::parse(&delta_grid).map_err(|e| e.to_string())?;
            let rows = roc_curve(&cfg, &dg).map_err(|e| e.to_string())?;
            std::fs::write(&out, roc_csv(&rows)).map_err(|e| e.to_string())?;
            println!("wrote {} curve points to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Learn {
            trace,
            out,
            lp,
            max_iterations,
            t_start,
            t_end,
        } => {
            let text = std::fs::read_to_string(&trace).map_err(|e| e.to_string())?;
            let rows = learn_from_windows(&text, lp, max_iterations, t_start, t_end)?;
            std::fs::write(&out, estimates_csv(&rows)).map_err(|e| e.to_string())?;
            println!("wrote {} estimate rows to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Replay a windows CSV through the learning pipeline, keyed per
/// (agent, neighbor) link; rows with undecided labels are skipped.
fn learn_from_windows(
    text: &str,
    lp: usize,
    max_iterations: usize,
    t_start: f64,
    t_end: f64,
) -> Result<Vec<EstimateRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty windows CSV")?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize, String> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| format!("windows CSV is missing column {name:?}"))
    };
    let (c_agent, c_neighbor, c_label) = (col("agent")?, col("neighbor")?, col("label")?);
    let (c_t, c_eta) = (col("t_value")?, col("eta")?);
    let c_time = col("t")?;
    let (c_own, c_recv, c_neigh) = (col("own_mean")?, col("recv_mean")?, col("neigh_mean")?);
    let (c_l, c_sigma2, c_h) = (col("l")?, col("sigma2")?, col("h")?);
    let _ = c_eta;

    let mut learners: Vec<((usize, usize), NeighborLearner)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse_f = |i: usize| -> Result<f64, String> {
            f[i].parse::<f64>()
                .map_err(|e| format!("line {}: {e}", ln + 2))
        };
        let agent: usize = f[c_agent].parse().map_err(|e| format!("line {}: {e}", ln + 2))?;
        let neighbor: usize = f[c_neighbor]
            .parse()
            .map_err(|e| format!("line {}: {e}", ln + 2))?;
        let label: i8 = f[c_label].parse().map_err(|e| format!("line {}: {e}", ln + 2))?;
        let time: f64 = f[c_time].parse().map_err(|e| format!("line {}: {e}", ln + 2))?;
        if label < 0 || time < t_start || time > t_end {
            continue;
        }
        let key = (agent, neighbor);
        let learner = match learners.iter_mut().find(|(k, _)| *k == key) {
            Some((_, l)) => l,
            None => {
                let window_len = f[c_l]
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {e}", ln + 2))? as usize;
                let cfg = LearningConfig {
                    points_per_iteration: lp,
                    max_iterations,
                    tau0: 2 * lp,
                    tau1: 2 * lp,
                    ..LearningConfig::default()
                };
                let link = LinkParams {
                    window_len,
                    sigma2: parse_f(c_sigma2)?,
                    h: parse_f(c_h)?,
                };
                learners.push((key, NeighborLearner::new(cfg, link)));
                &mut learners.last_mut().unwrap().1
            }
        };
        learner.push(WindowPoint {
            hypothesis: if label == 0 { Hypothesis::H0 } else { Hypothesis::H1 },
            t_value: parse_f(c_t)?,
            own_mean: parse_f(c_own)?,
            recv_mean: parse_f(c_recv)?,
            neigh_mean: parse_f(c_neigh)?,
        });
    }

    let mut rows = Vec::new();
    for ((agent, neighbor), learner) in &learners {
        for snap in &learner.snapshots {
            rows.push(EstimateRow {
                agent: *agent,
                neighbor: *neighbor,
                snapshot: *snap,
            });
        }
    }
    Ok(rows)
}
