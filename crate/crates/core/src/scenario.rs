//! Scenario configuration: the JSON schema behind every CLI command, with
//! validation that checks dimensions, balancedness and trigger-design
//! feasibility before a run starts.

use crate::attack::{ByzantineProfile, WeightMode};
use crate::graph::{self, WeightedDigraph, BALANCE_TOL};
use crate::trigger;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config does not parse: {0}")]
    Schema(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    /// Row i holds the out-edge gains of agent i.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSection {
    pub c: f64,
    pub x0: f64,
}

/// Trigger gains: explicit per-agent values or "auto" to take each agent's
/// design bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Auto(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerSection {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub c_offset: f64,
    pub deltas: DeltaSpec,
}

fn one() -> f64 {
    1.0
}

/// Scalar broadcast to every link, or a full per-link matrix indexed
/// [from][to].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkValue {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl LinkValue {
    pub fn at(&self, from: usize, to: usize) -> f64 {
        match self {
            LinkValue::Scalar(v) => *v,
            LinkValue::Matrix(m) => m[from][to],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSection {
    #[serde(default = "default_h")]
    pub h: LinkValue,
    #[serde(default = "default_sigma2")]
    pub sigma2: LinkValue,
}

fn default_h() -> LinkValue {
    LinkValue::Scalar(1.0)
}

fn default_sigma2() -> LinkValue {
    LinkValue::Scalar(1.0)
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            h: default_h(),
            sigma2: default_sigma2(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackEntry {
    pub agent: usize,
    #[serde(rename = "Delta", default)]
    pub delta: f64,
    #[serde(rename = "P", default)]
    pub p: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub t_start: f64,
    /// Optional out-neighbors whose assigned gains the omega manipulation
    /// targets; all mode-implied edges otherwise.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
}

impl AttackEntry {
    pub fn to_profile(&self) -> ByzantineProfile {
        ByzantineProfile {
            agent_id: self.agent,
            delta_attack: self.delta,
            p_attack: self.p,
            omega: self.omega,
            t_start: self.t_start,
            targets: self.targets.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSection {
    #[serde(rename = "L", default = "default_window")]
    pub window_len: usize,
    #[serde(default = "default_margin")]
    pub lambda_margin: f64,
    #[serde(rename = "Ts", default)]
    pub ts: Option<f64>,
}

fn default_window() -> usize {
    15
}

fn default_margin() -> f64 {
    15.0
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            window_len: default_window(),
            lambda_margin: default_margin(),
            ts: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningSection {
    #[serde(rename = "Lp", default = "default_lp")]
    pub points_per_iteration: usize,
    #[serde(default = "default_learn_iters")]
    pub max_iterations: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default = "default_em_max_iter")]
    pub em_max_iter: usize,
    #[serde(default)]
    pub tau0: Option<usize>,
    #[serde(default)]
    pub tau1: Option<usize>,
    /// Learning window within the run.
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_t_inf")]
    pub t_end: f64,
}

fn default_lp() -> usize {
    20
}
fn default_learn_iters() -> usize {
    20
}
fn default_em_tol() -> f64 {
    1e-8
}
fn default_em_max_iter() -> usize {
    200
}
fn default_t_inf() -> f64 {
    f64::INFINITY
}

impl LearningSection {
    pub fn to_config(&self) -> crate::learning::LearningConfig {
        crate::learning::LearningConfig {
            points_per_iteration: self.points_per_iteration,
            max_iterations: self.max_iterations,
            em_tol: self.em_tol,
            em_max_iter: self.em_max_iter,
            tau0: self.tau0.unwrap_or(2 * self.points_per_iteration),
            tau1: self.tau1.unwrap_or(2 * self.points_per_iteration),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetuneEntry {
    pub agent: usize,
    pub t: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DataCorrectionSection {
    #[serde(default)]
    pub enable: bool,
    #[serde(default)]
    pub t_start: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationSection {
    #[serde(default = "default_mode")]
    pub mode: WeightMode,
    #[serde(default)]
    pub retune: Vec<RetuneEntry>,
    #[serde(default)]
    pub data_correction: DataCorrectionSection,
}

fn default_mode() -> WeightMode {
    WeightMode::SelfDesigned
}

impl Default for MitigationSection {
    fn default() -> Self {
        MitigationSection {
            mode: default_mode(),
            retune: Vec::new(),
            data_correction: DataCorrectionSection::default(),
        }
    }
}

/// Target agent and snapshot instant for the analytic sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub agent: usize,
    #[serde(default)]
    pub snapshot_t: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub noisy_control: bool,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_sync_eps")]
    pub sync_eps: f64,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_seed() -> u64 {
    42
}
fn default_stride() -> usize {
    10
}
fn default_sync_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub graph: GraphSection,
    pub agents: Vec<AgentSection>,
    pub trigger: TriggerSection,
    #[serde(default)]
    pub channels: ChannelSection,
    #[serde(default)]
    pub attack: Vec<AttackEntry>,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub learning: Option<LearningSection>,
    #[serde(default)]
    pub mitigation: MitigationSection,
    #[serde(default)]
    pub analysis: Option<AnalysisSection>,
    /// Connectivity value the scenario was designed against in its source,
    /// reported against the computed one by the design command.
    #[serde(default)]
    pub expected_lambda: Option<f64>,
    pub sim: SimSection,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn graph(&self) -> Result<WeightedDigraph, ScenarioError> {
        Ok(WeightedDigraph::from_weights(self.graph.weights.clone())?)
    }

    pub fn detection_ts(&self) -> f64 {
        self.detection.ts.unwrap_or(self.sim.dt * 10.0)
    }

    pub fn profiles(&self) -> Vec<ByzantineProfile> {
        self.attack.iter().map(|a| a.to_profile()).collect()
    }

    /// Resolve per-agent trigger gains, taking design bounds for "auto".
    pub fn resolve_deltas(&self, lambda_g: f64) -> Result<Vec<f64>, ScenarioError> {
        match &self.trigger.deltas {
            DeltaSpec::Values(v) => {
                if v.len() != self.n() {
                    return Err(ScenarioError::DimensionMismatch(format!(
                        "{} trigger gains for {} agents",
                        v.len(),
                        self.n()
                    )));
                }
                Ok(v.clone())
            }
            DeltaSpec::Auto(tag) => {
                if tag != "auto" {
                    return Err(ScenarioError::InvalidValue(format!(
                        "deltas must be a list or \"auto\", got {tag:?}"
                    )));
                }
                let g = self.graph()?;
                let (d_in, _) = graph::degrees(&g);
                self.agents
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        trigger::design_delta(
                            d_in[j],
                            lambda_g,
                            a.c,
                            self.trigger.alpha,
                            self.trigger.beta,
                        )
                        .map_err(|e| ScenarioError::InvalidValue(e.to_string()))
                    })
                    .collect()
            }
        }
    }
}

/// Per-agent trigger-design line of the validation report.
#[derive(Debug, Clone)]
pub struct DesignLine {
    pub agent: usize,
    pub d_in: f64,
    pub rho: f64,
    pub bound: Option<f64>,
    pub configured: f64,
    pub within_bound: bool,
}

/// Outcome of static scenario validation.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub lambda_g: f64,
    pub balanced: bool,
    pub lines: Vec<DesignLine>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_within_bounds(&self) -> bool {
        self.lines.iter().all(|l| l.within_bound)
    }
}

/// Check dimension consistency, graph validity, balancedness and the
/// trigger-design bounds. Hard inconsistencies are errors; design-bound
/// violations are warnings (scenarios reproduce source parameterizations
/// that overrun the conservative sufficient condition).
pub fn validate(cfg: &ScenarioConfig) -> Result<ValidationReport, ScenarioError> {
    let n = cfg.n();
    if n < 2 {
        return Err(ScenarioError::DimensionMismatch(format!(
            "need at least 2 agents, got {n}"
        )));
    }
    if cfg.graph.weights.len() != n {
        return Err(ScenarioError::DimensionMismatch(format!(
            "{} agents but {}x? weight matrix",
            n,
            cfg.graph.weights.len()
        )));
    }
    let g = cfg.graph()?;
    if let LinkValue::Matrix(m) = &cfg.channels.h {
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(ScenarioError::DimensionMismatch(
                "channel gain matrix must be n x n".into(),
            ));
        }
    }
    if let LinkValue::Matrix(m) = &cfg.channels.sigma2 {
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(ScenarioError::DimensionMismatch(
                "channel noise matrix must be n x n".into(),
            ));
        }
    }
    for a in &cfg.attack {
        if a.agent >= n {
            return Err(ScenarioError::DimensionMismatch(format!(
                "attack entry references agent {} of {n}",
                a.agent
            )));
        }
        if !(0.0..=1.0).contains(&a.p) {
            return Err(ScenarioError::InvalidValue(format!(
                "attack probability {} outside [0,1]",
                a.p
            )));
        }
    }
    if cfg.sim.dt <= 0.0 || cfg.sim.t_end <= cfg.sim.dt {
        return Err(ScenarioError::InvalidValue(
            "sim requires dt > 0 and t_end > dt".into(),
        ));
    }

    let mut warnings = Vec::new();
    let lambda_g = graph::algebraic_connectivity(&g)?;
    let balanced = graph::is_balanced(&g, BALANCE_TOL);
    if !balanced {
        warnings.push("design graph is not balanced".into());
    }
    if let Some(expect) = cfg.expected_lambda {
        if (expect - lambda_g).abs() > 0.01 {
            warnings.push(format!(
                "configured expected_lambda {expect} differs from computed connectivity {lambda_g:.6}"
            ));
        }
    }

    let deltas = cfg.resolve_deltas(cfg.expected_lambda.unwrap_or(lambda_g))?;
    let (d_in, _) = graph::degrees(&g);
    let mut lines = Vec::with_capacity(n);
    for j in 0..n {
        let bound = trigger::design_delta(
            d_in[j],
            lambda_g,
            cfg.agents[j].c,
            cfg.trigger.alpha,
            cfg.trigger.beta,
        )
        .ok();
        let within = bound.is_some_and(|b| deltas[j] <= b + 1e-12);
        if !within {
            warnings.push(format!(
                "agent {j}: configured delta {} exceeds the design bound {:?}",
                deltas[j], bound
            ));
        }
        lines.push(DesignLine {
            agent: j,
            d_in: d_in[j],
            rho: cfg.agents[j].c,
            bound,
            configured: deltas[j],
            within_bound: within,
        });
    }
    Ok(ValidationReport {
        lambda_g,
        balanced,
        lines,
        warnings,
    })
}
