//! Mitigation machinery: weight-manipulation estimation under the
//! neighbor-assigned protocol, passivity-based trigger retuning, data
//! correction from learned attack magnitudes, honest-only decisions, and
//! the deviation-bound diagnostic.

use crate::attack::{ByzantineProfile, WeightMode};
use crate::detection::{decision_threshold, DetectionConfig, SummaryStatistic};
use crate::graph::{self, WeightedDigraph};
use crate::learning::Classification;
use crate::Hypothesis;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MitigationError {
    #[error("weight-manipulation estimation requires the neighbor-assigned protocol")]
    ModeMismatch,
    #[error("no feasible retuned trigger gain: bound {0} is not positive")]
    InfeasibleMitigation(f64),
    #[error("every neighbor is classified Byzantine; no honest statistic remains")]
    NoHonestNeighbors,
    #[error("deviation bound needs a positive-definite design matrix; diagonal {index} is {value}")]
    ThetaNotPositive { index: usize, value: f64 },
    #[error("neighbor window {0} is incomplete")]
    WindowNotFull(usize),
}

/// Weight bookkeeping under either gain-assignment protocol.
#[derive(Debug, Clone)]
pub struct WeightAssignmentProtocol {
    pub mode: WeightMode,
    /// Design-time weighted in-degree each agent knows for itself.
    pub expected_d_in: Vec<f64>,
    /// Sum of the gains actually assigned to each agent by its neighbors.
    pub observed_in: Vec<f64>,
}

impl WeightAssignmentProtocol {
    /// Observe the in-gains of the (possibly attacked) graph against the
    /// design graph.
    pub fn from_graphs(mode: WeightMode, design: &WeightedDigraph, observed: &WeightedDigraph) -> Self {
        let (expected_d_in, _) = graph::degrees(design);
        let (observed_in, _) = graph::degrees(observed);
        WeightAssignmentProtocol {
            mode,
            expected_d_in,
            observed_in,
        }
    }
}

/// Total weight manipulation an agent can see on its own in-gains: the
/// excess of the assigned sum over the in-degree it knows it should have.
/// Only meaningful when neighbors assign the gains.
pub fn estimate_omega(agent: usize, proto: &WeightAssignmentProtocol) -> Result<f64, MitigationError> {
    if proto.mode != WeightMode::NeighborAssigned {
        return Err(MitigationError::ModeMismatch);
    }
    Ok((proto.observed_in[agent] - proto.expected_d_in[agent]).max(0.0))
}

/// Passivity demanded by a trigger gain and the surplus over it. The agent
/// satisfies the synchronization design exactly when the surplus is
/// nonnegative; the surplus is what weight manipulations eat into.
#[derive(Debug, Clone, Copy)]
pub struct PassivitySurplus {
    pub rho_required: f64,
    pub rho_surplus: f64,
}

pub fn passivity_surplus(
    rho: f64,
    lambda_g: f64,
    d_in: f64,
    delta: f64,
    alpha: f64,
    beta: f64,
) -> PassivitySurplus {
    let rho_required =
        d_in * ((alpha + beta) * delta / 2.0 + 1.0 / (2.0 * alpha) + 1.0 / (2.0 * beta)) - lambda_g;
    PassivitySurplus {
        rho_required,
        rho_surplus: rho - rho_required,
    }
}

/// Supremum of trigger gains whose passivity surplus absorbs the observed
/// weight manipulation:
/// delta* = (rho + lambda - d_in (1/(2a) + 1/(2b)) - omega/(2a))
///        / ((d_in + omega)(a + b)/2).
/// Coincides with the plain design bound when omega = 0; the caller picks
/// a retuned gain strictly below it.
pub fn retune_delta(
    rho: f64,
    lambda_g: f64,
    d_in: f64,
    omega_sum: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64, MitigationError> {
    assert!(alpha > 0.0 && beta > 0.0);
    let numer = rho + lambda_g
        - d_in * (1.0 / (2.0 * alpha) + 1.0 / (2.0 * beta))
        - omega_sum / (2.0 * alpha);
    let denom = (d_in + omega_sum) * (alpha + beta) / 2.0;
    let bound = numer / denom;
    if bound <= 0.0 {
        return Err(MitigationError::InfeasibleMitigation(bound));
    }
    Ok(bound)
}

/// Undo the hypothesis-keyed falsification on a received value: subtract
/// the estimate under H0 (vandalism adds), add it under H1 (exploitation
/// subtracts).
pub fn correct_output(y_received: f64, delta_hat: f64, hypothesis: Hypothesis) -> f64 {
    match hypothesis {
        Hypothesis::H0 => y_received - delta_hat,
        Hypothesis::H1 => y_received + delta_hat,
    }
}

/// Synchronization decision restricted to honest-classified neighbors,
/// with the threshold rebuilt over that subset.
pub fn honest_only_decision(
    stats: &[&SummaryStatistic],
    classifications: &[Classification],
    cfg: &DetectionConfig,
    sigma2s: &[f64],
) -> Result<Hypothesis, MitigationError> {
    assert_eq!(stats.len(), classifications.len());
    assert_eq!(stats.len(), sigma2s.len());
    let honest: Vec<usize> = (0..stats.len())
        .filter(|&i| classifications[i] == Classification::Honest)
        .collect();
    if honest.is_empty() {
        return Err(MitigationError::NoHonestNeighbors);
    }
    let mut total = 0.0;
    let mut sig = Vec::with_capacity(honest.len());
    for &i in &honest {
        if !stats[i].is_full() {
            return Err(MitigationError::WindowNotFull(i));
        }
        total += stats[i].t_value();
        sig.push(sigma2s[i]);
    }
    let gamma = decision_threshold(cfg, &sig);
    Ok(if total < gamma {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    })
}

/// One sampled instant of a run, as consumed by the deviation bound.
#[derive(Debug, Clone)]
pub struct BoundSample {
    pub t: f64,
    /// Agent outputs at the instant.
    pub y: Vec<f64>,
    /// Trigger errors (output minus own last broadcast) at the instant.
    pub e: Vec<f64>,
}

/// Evaluate both sides of the Byzantine deviation bound at each sampled
/// instant: the design quadratic form on the left against the printed sum
/// of weight-, error- and falsification-terms on the right. `lambda_g` is
/// the connectivity the triggers were designed against; the design matrix
/// must be positive on the diagonal for the bound to be monitorable.
pub fn deviation_bound(
    samples: &[BoundSample],
    profiles: &[ByzantineProfile],
    design: &WeightedDigraph,
    lambda_g: f64,
    rho: &[f64],
    deltas: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Vec<(f64, f64)>, MitigationError> {
    let n = design.n();
    let (d_in, _) = graph::degrees(design);
    // diagonal of the design matrix
    let mut theta = vec![0.0; n];
    for j in 0..n {
        theta[j] = lambda_g + rho[j]
            - d_in[j]
                * ((alpha + beta) * deltas[j] / 2.0
                    + 1.0 / (2.0 * alpha)
                    + 1.0 / (2.0 * beta));
        if theta[j] <= 0.0 {
            return Err(MitigationError::ThetaNotPositive {
                index: j,
                value: theta[j],
            });
        }
    }
    // per-agent Byzantine parameters; in-neighbor counts ignore weights
    let mut omega = vec![0.0; n];
    let mut delta_att = vec![0.0; n];
    let mut t_start = vec![f64::INFINITY; n];
    for p in profiles {
        omega[p.agent_id] = p.omega;
        delta_att[p.agent_id] = p.delta_attack;
        t_start[p.agent_id] = p.t_start;
    }
    let count_in: Vec<f64> = (0..n).map(|j| design.in_neighbor_count(j) as f64).collect();

    let out = samples
        .iter()
        .map(|s| {
            let (_, yd) = graph::sync_measure(&s.y);
            let lhs: f64 = yd.iter().zip(&theta).map(|(v, th)| th * v * v).sum();
            let mut rhs = 0.0;
            for j in 0..n {
                let active = s.t >= t_start[j];
                let (wj, dj) = if active {
                    (omega[j], delta_att[j])
                } else {
                    (0.0, 0.0)
                };
                let byz = wj != 0.0 || dj != 0.0;
                let cnt_b = if byz { count_in[j] } else { 0.0 };
                // error term for every agent
                rhs += (alpha + beta) * (d_in[j] / 2.0 + cnt_b * wj) * s.e[j] * s.e[j];
                if byz {
                    rhs += cnt_b * wj / (2.0 * alpha) * s.y[j] * s.y[j];
                    rhs += (alpha + beta) * (d_in[j] + cnt_b * wj) * dj * dj;
                    for (k, _) in design.in_neighbors(j) {
                        rhs += (0.25 + 1.0 / (2.0 * beta)) * wj * s.y[k] * s.y[k];
                    }
                }
            }
            (lhs, rhs)
        })
        .collect();
    Ok(out)
}
