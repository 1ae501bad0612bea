//! Analytic parameter sweeps over attack parameters: the deflection
//! surface on a (P, Delta) grid and detection/false-alarm curves over an
//! attack-strength grid. Link statistics (noncentralities and window
//! means) are frozen from a no-attack baseline run of the scenario, so
//! every grid point is a pure closed-form evaluation.

use crate::detection::{self, eta_prime, link_moments, DeflectionLink, LinkDist};
use crate::fmt_f64;
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::sim::{run_scenario, LinkSnapshot, SimError, SimulationTrace, WindowSnapshot};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Detection(#[from] detection::DetectionError),
    #[error("scenario has no analysis section naming the target agent")]
    NoAnalysisTarget,
    #[error("no full detection window was captured for the analysis agent")]
    NoSnapshot,
    #[error("invalid grid: {0}")]
    BadGrid(String),
}

/// Inclusive linear grid parsed from "start:stop:steps".
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(SweepError::BadGrid(format!(
                "expected start:stop:steps, got {text:?}"
            )));
        }
        let start: f64 = parts[0]
            .parse()
            .map_err(|_| SweepError::BadGrid(text.into()))?;
        let stop: f64 = parts[1]
            .parse()
            .map_err(|_| SweepError::BadGrid(text.into()))?;
        let steps: usize = parts[2]
            .parse()
            .map_err(|_| SweepError::BadGrid(text.into()))?;
        if steps == 0 {
            return Err(SweepError::BadGrid("steps must be positive".into()));
        }
        Ok(GridSpec { start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| {
                self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeflectionRow {
    pub p: f64,
    pub delta: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RocRow {
    pub delta: f64,
    /// Attack probability the curve was evaluated at (fixed by the config).
    pub p: f64,
    pub p_d: f64,
    pub p_fa: f64,
}

/// Baseline (attack-free) run of the scenario, used to freeze window
/// statistics for the sweeps.
fn baseline_trace(cfg: &ScenarioConfig) -> Result<SimulationTrace, SweepError> {
    let mut clean = cfg.clone();
    clean.attack.clear();
    clean.mitigation.retune.clear();
    clean.mitigation.data_correction.enable = false;
    clean.learning = None;
    Ok(run_scenario(&clean)?)
}

fn snapshot_for<'a>(
    cfg: &ScenarioConfig,
    trace: &'a SimulationTrace,
) -> Result<&'a WindowSnapshot, SweepError> {
    let analysis = cfg.analysis.as_ref().ok_or(SweepError::NoAnalysisTarget)?;
    let snap = match analysis.snapshot_t {
        Some(t) => trace.snapshot_at(t),
        // default to the first full window (transient statistics)
        None => trace.snapshots.first(),
    };
    snap.ok_or(SweepError::NoSnapshot)
}

fn byzantine_neighbors(cfg: &ScenarioConfig) -> Vec<usize> {
    cfg.attack.iter().map(|a| a.agent).collect()
}

/// Evaluate the deflection coefficient of the analysis agent's detector on
/// a (P, Delta) grid, with eta and window means frozen from the baseline
/// snapshot. Rows are ordered by grid index regardless of parallelism.
pub fn sweep_deflection(
    cfg: &ScenarioConfig,
    p_grid: &GridSpec,
    delta_grid: &GridSpec,
    parallel: bool,
) -> Result<Vec<DeflectionRow>, SweepError> {
    let trace = baseline_trace(cfg)?;
    let snap = snapshot_for(cfg, &trace)?;
    let byz = byzantine_neighbors(cfg);
    let l = cfg.detection.window_len;

    let points: Vec<(f64, f64)> = p_grid
        .values()
        .into_iter()
        .flat_map(|p| delta_grid.values().into_iter().map(move |d| (p, d)))
        .collect();

    let links_of = |p: f64, delta: f64| -> Vec<DeflectionLink> {
        snap.links
            .iter()
            .map(|ls: &LinkSnapshot| {
                let byzantine = byz.contains(&ls.neighbor);
                let h = cfg.channels.h.at(ls.neighbor, snap.agent);
                let sigma2 = cfg.channels.sigma2.at(ls.neighbor, snap.agent);
                DeflectionLink {
                    byzantine,
                    p_attack: if byzantine { p } else { 0.0 },
                    delta: if byzantine { delta } else { 0.0 },
                    h,
                    sigma2,
                    eta: ls.eta,
                    eta_prime: if byzantine {
                        eta_prime(ls.eta, l, h, delta, ls.mu_k, ls.mu_j, sigma2)
                    } else {
                        ls.eta
                    },
                }
            })
            .collect()
    };

    let eval = |&(p, delta): &(f64, f64)| -> Result<DeflectionRow, SweepError> {
        let d = detection::deflection(l, &links_of(p, delta))?;
        Ok(DeflectionRow { p, delta, d })
    };

    if parallel {
        points.par_iter().map(eval).collect()
    } else {
        points.iter().map(eval).collect()
    }
}

/// Detection and false-alarm probabilities of the analysis agent over an
/// attack-strength grid. H1 statistics come from the earliest full window
/// of the baseline run (the system is still visibly unsynchronized there);
/// the false-alarm branch is evaluated at synchronization (eta = 0). The
/// attacker's falsification sign follows its exploitation objective.
pub fn roc_curve(cfg: &ScenarioConfig, delta_grid: &GridSpec) -> Result<Vec<RocRow>, SweepError> {
    let trace = baseline_trace(cfg)?;
    let analysis = cfg.analysis.as_ref().ok_or(SweepError::NoAnalysisTarget)?;
    let snap = trace.snapshots.first().ok_or(SweepError::NoSnapshot)?;
    let byz = byzantine_neighbors(cfg);
    let l = cfg.detection.window_len;
    let sigma2s: Vec<f64> = snap
        .links
        .iter()
        .map(|ls| cfg.channels.sigma2.at(ls.neighbor, analysis.agent))
        .collect();
    let gamma = l as f64 * sigma2s.iter().sum::<f64>() + cfg.detection.lambda_margin;

    let p_nominal = cfg.attack.iter().map(|a| a.p).fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(delta_grid.steps);
    for delta in delta_grid.values() {
        let links: Vec<LinkDist> = snap
            .links
            .iter()
            .zip(&sigma2s)
            .map(|(ls, &sigma2)| {
                let byzantine = byz.contains(&ls.neighbor);
                let h = cfg.channels.h.at(ls.neighbor, analysis.agent);
                let p_attack = cfg
                    .attack
                    .iter()
                    .find(|a| a.agent == ls.neighbor)
                    .map(|a| a.p)
                    .unwrap_or(0.0);
                // exploitation picks the falsification sign that pulls the
                // reported output toward the host agent
                let signed = if ls.mu_k >= ls.mu_j { delta } else { -delta };
                let ep = if byzantine {
                    eta_prime(ls.eta, l, h, signed, ls.mu_k, ls.mu_j, sigma2)
                } else {
                    ls.eta
                };
                LinkDist {
                    moments: link_moments(l, sigma2, h, delta, ls.eta, ep),
                    byzantine,
                    p_attack,
                }
            })
            .collect();
        let (p_d, p_fa) = detection::transient_pd_pfa(gamma, &links)?;
        rows.push(RocRow {
            delta,
            p: p_nominal,
            p_d,
            p_fa,
        });
    }
    Ok(rows)
}

pub fn deflection_csv(rows: &[DeflectionRow]) -> String {
    let mut out = String::from("P,Delta,D\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(r.p),
            fmt_f64(r.delta),
            fmt_f64(r.d)
        ));
    }
    out
}

pub fn roc_csv(rows: &[RocRow]) -> String {
    let mut out = String::from("Delta,P,P_D,P_FA\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.delta),
            fmt_f64(r.p),
            fmt_f64(r.p_d),
            fmt_f64(r.p_fa)
        ));
    }
    out
}
