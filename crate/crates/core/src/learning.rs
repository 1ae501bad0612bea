//! Online estimation of neighbor behavior from window statistics:
//! method-of-moments tracking of the honest single-Gaussian model, EM
//! fitting of the two-component Byzantine mixture with a mixing weight
//! shared across hypotheses, likelihood-ratio classification, and the
//! closed-form attack-magnitude estimators.


use crate::Hypothesis;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variance floor applied to every fitted component.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("no data points available for estimation")]
    InsufficientData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningConfig {
    /// Data points consumed per learning iteration.
    pub points_per_iteration: usize,
    pub max_iterations: usize,
    /// Relative log-likelihood tolerance for EM termination.
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Minimum per-hypothesis sample counts before estimation starts.
    pub tau0: usize,
    pub tau1: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        let lp = 20;
        LearningConfig {
            points_per_iteration: lp,
            max_iterations: 20,
            em_tol: 1e-8,
            em_max_iter: 200,
            tau0: 2 * lp,
            tau1: 2 * lp,
        }
    }
}

/// Running mean/variance estimator over batches of window statistics.
/// Running sums keep the estimate identical to the batch moments of all
/// points seen so far; the per-iteration mean recursion is reproduced
/// exactly, the variance recursion up to its own self-referencing
/// approximation.
#[derive(Debug, Clone, Default)]
pub struct MomentEstimator {
    sum: f64,
    sum_sq: f64,
    points: usize,
    iterations: usize,
}

impl MomentEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one batch of labeled window statistics into the estimate.
    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        for &t in batch {
            self.sum += t;
            self.sum_sq += t * t;
        }
        self.points += batch.len();
        self.iterations += 1;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn mean(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            self.sum / self.points as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            (self.sum_sq / self.points as f64 - self.mean().powi(2)).max(0.0)
        }
    }

    pub fn fit(&self) -> Option<GaussianFit> {
        if self.points == 0 {
            None
        } else {
            Some(GaussianFit {
                mu: self.mean(),
                var: self.variance().max(VAR_FLOOR),
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub mu: f64,
    pub var: f64,
}

/// Two-component Gaussian mixture per hypothesis with a shared mixing
/// weight; component 1 is the attacked state, so `pi[1]` estimates the
/// attack probability.
#[derive(Debug, Clone)]
pub struct MixtureEstimate {
    /// Component means indexed [hypothesis][component].
    pub mu: [[f64; 2]; 2],
    /// Component variances indexed [hypothesis][component].
    pub var: [[f64; 2]; 2],
    /// Mixing weights (sum to one).
    pub pi: [f64; 2],
    pub log_likelihood: f64,
    /// Log-likelihood after every EM iteration, for monotonicity checks.
    pub ll_history: Vec<f64>,
    /// Set when a component collapsed and the single-component fallback
    /// was returned.
    pub degenerate: bool,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    let idx = ((n - 1) as f64 * p).round() as usize;
    sorted[idx.min(n - 1)]
}

fn block_init(data: &[f64]) -> ([f64; 2], [f64; 2]) {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mu = [percentile(&sorted, 0.25), percentile(&sorted, 0.75)];
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let v = (0.5 * var).max(VAR_FLOOR);
    (mu, [v, v])
}

fn block_mle(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = (data.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).max(VAR_FLOOR);
    (mean, var)
}

fn log_mix_pdf(t: f64, pi: &[f64; 2], mu: &[f64; 2], var: &[f64; 2]) -> f64 {
    // log-sum-exp over the two components
    let lp = [
        pi[0].max(1e-300).ln() + log_gauss(t, mu[0], var[0]),
        pi[1].max(1e-300).ln() + log_gauss(t, mu[1], var[1]),
    ];
    let m = lp[0].max(lp[1]);
    m + ((lp[0] - m).exp() + (lp[1] - m).exp()).ln()
}

fn log_gauss(t: f64, mu: f64, var: f64) -> f64 {
    let d = t - mu;
    -d * d / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

fn mixture_log_likelihood(blocks: &[&[f64]; 2], est: &MixtureEstimate) -> f64 {
    let mut ll = 0.0;
    for (b, data) in blocks.iter().enumerate() {
        for &t in data.iter() {
            ll += log_mix_pdf(t, &est.pi, &est.mu[b], &est.var[b]);
        }
    }
    ll
}

/// Batch EM over the labeled window statistics of one neighbor. `data0` and
/// `data1` are the points labeled H0 and H1; either may be empty (the model
/// then degenerates to a single-block mixture). Warm starts continue from
/// `init`. The log-likelihood is nondecreasing across iterations; if a
/// component's responsibility mass collapses below 1e-9 the single-component
/// fallback is returned with the `degenerate` flag set.
pub fn em_fit(
    data0: &[f64],
    data1: &[f64],
    init: Option<&MixtureEstimate>,
    cfg: &LearningConfig,
) -> Result<MixtureEstimate, LearningError> {
    let blocks: [&[f64]; 2] = [data0, data1];
    let total = data0.len() + data1.len();
    if total == 0 {
        return Err(LearningError::InsufficientData);
    }

    let mut est = match init {
        Some(e) => {
            let mut e = e.clone();
            e.ll_history.clear();
            e.degenerate = false;
            e
        }
        None => {
            let mut mu = [[0.0; 2]; 2];
            let mut var = [[1.0; 2]; 2];
            for b in 0..2 {
                if !blocks[b].is_empty() {
                    let (m, v) = block_init(blocks[b]);
                    mu[b] = m;
                    var[b] = v;
                }
            }
            // mirror the populated block into an empty one so its parameters
            // stay finite (they carry no likelihood weight)
            for b in 0..2 {
                if blocks[b].is_empty() {
                    mu[b] = mu[1 - b];
                    var[b] = var[1 - b];
                }
            }
            MixtureEstimate {
                mu,
                var,
                pi: [0.5, 0.5],
                log_likelihood: f64::NEG_INFINITY,
                ll_history: Vec::new(),
                degenerate: false,
            }
        }
    };

    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..cfg.em_max_iter {
        // E-step: responsibilities per block and component
        let mut resp: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
        let mut mass = [0.0f64; 2];
        for b in 0..2 {
            resp[b] = blocks[b]
                .iter()
                .map(|&t| {
                    let lp0 = est.pi[0].max(1e-300).ln() + log_gauss(t, est.mu[b][0], est.var[b][0]);
                    let lp1 = est.pi[1].max(1e-300).ln() + log_gauss(t, est.mu[b][1], est.var[b][1]);
                    let m = lp0.max(lp1);
                    let w0 = (lp0 - m).exp();
                    let w1 = (lp1 - m).exp();
                    let r = [w0 / (w0 + w1), w1 / (w0 + w1)];
                    mass[0] += r[0];
                    mass[1] += r[1];
                    r
                })
                .collect();
        }

        if mass[0] < 1e-9 || mass[1] < 1e-9 {
            // component collapse -> single-component fallback
            let mut fb = est.clone();
            fb.pi = [1.0, 0.0];
            for b in 0..2 {
                if !blocks[b].is_empty() {
                    let (m, v) = block_mle(blocks[b]);
                    fb.mu[b] = [m, m];
                    fb.var[b] = [v, v];
                }
            }
            fb.degenerate = true;
            fb.log_likelihood = mixture_log_likelihood(&blocks, &fb);
            fb.ll_history.push(fb.log_likelihood);
            return Ok(fb);
        }

        // M-step: shared mixing weights, per-block means and variances
        est.pi = [mass[0] / total as f64, mass[1] / total as f64];
        for b in 0..2 {
            if blocks[b].is_empty() {
                continue;
            }
            for j in 0..2 {
                let w: f64 = resp[b].iter().map(|r| r[j]).sum();
                if w < 1e-12 {
                    continue;
                }
                let mu = blocks[b]
                    .iter()
                    .zip(&resp[b])
                    .map(|(&t, r)| r[j] * t)
                    .sum::<f64>()
                    / w;
                let var = blocks[b]
                    .iter()
                    .zip(&resp[b])
                    .map(|(&t, r)| r[j] * (t - mu).powi(2))
                    .sum::<f64>()
                    / w;
                est.mu[b][j] = mu;
                est.var[b][j] = var.max(VAR_FLOOR);
            }
        }

        let ll = mixture_log_likelihood(&blocks, &est);
        debug_assert!(
            ll >= prev_ll - 1e-8 * (1.0 + prev_ll.abs()),
            "EM log-likelihood decreased: {prev_ll} -> {ll}"
        );
        est.ll_history.push(ll);
        est.log_likelihood = ll;
        if prev_ll.is_finite() && (ll - prev_ll).abs() <= cfg.em_tol * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }
    Ok(est)
}

/// Reorder mixture components so that, within the anchor hypothesis block,
/// component 0 has the smaller mean. Keeps `pi[1]` aligned with the
/// attacked state for vandalism-style (energy-increasing) falsification.
pub fn orient_ascending(est: &mut MixtureEstimate, anchor: Hypothesis) {
    let b = anchor.index();
    if est.mu[b][0] > est.mu[b][1] {
        est.mu.iter_mut().for_each(|row| row.swap(0, 1));
        est.var.iter_mut().for_each(|row| row.swap(0, 1));
        est.pi.swap(0, 1);
    }
}

/// Normalized component separation of one hypothesis block: the mean gap
/// in units of the wider component's spread. Near zero when the block is
/// a noise split rather than a real mixture.
pub fn block_separation(est: &MixtureEstimate, hyp: Hypothesis) -> f64 {
    let b = hyp.index();
    (est.mu[b][1] - est.mu[b][0]).abs() / est.var[b][0].max(est.var[b][1]).max(VAR_FLOOR).sqrt()
}

/// Orient ascending on whichever populated block shows the stronger
/// component separation. A noise-only block has an arbitrary component
/// ordering that flips between refits; anchoring there would scramble the
/// other block's labels through the shared mixing weights.
pub fn orient_canonical(est: &mut MixtureEstimate, populated: [bool; 2]) -> Hypothesis {
    let anchor = match populated {
        [true, true] => {
            if block_separation(est, Hypothesis::H1) > block_separation(est, Hypothesis::H0) {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            }
        }
        [false, true] => Hypothesis::H1,
        _ => Hypothesis::H0,
    };
    orient_ascending(est, anchor);
    anchor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Honest,
    Byzantine,
}

/// Maximum-likelihood neighbor classification: the neighbor is flagged
/// Byzantine when the fitted mixture explains its window statistics better
/// than the honest single-Gaussian model by more than a BIC-style
/// complexity margin (the mixture carries three extra parameters; a raw
/// ratio-vs-one rule would flag every honest neighbor through overfit).
/// Ties break to Honest.
pub fn classify_neighbor(
    data0: &[f64],
    data1: &[f64],
    honest0: Option<&GaussianFit>,
    honest1: Option<&GaussianFit>,
    mixture: &MixtureEstimate,
) -> Classification {
    let blocks: [&[f64]; 2] = [data0, data1];
    let honest = [honest0, honest1];
    let n_total = data0.len() + data1.len();
    if n_total == 0 {
        return Classification::Honest;
    }
    let mut ll_gauss = 0.0;
    let mut ll_mix = 0.0;
    for b in 0..2 {
        let Some(fit) = honest[b] else {
            continue;
        };
        for &t in blocks[b] {
            ll_gauss += log_gauss(t, fit.mu, fit.var.max(VAR_FLOOR));
            ll_mix += log_mix_pdf(t, &mixture.pi, &mixture.mu[b], &mixture.var[b]);
        }
    }
    let margin = 1.5 * (n_total as f64).ln();
    if ll_mix - ll_gauss > margin {
        Classification::Byzantine
    } else {
        Classification::Honest
    }
}

/// Attack-magnitude estimate together with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct DeltaEstimate {
    pub delta_hat: f64,
    pub hypothesis_source: Hypothesis,
    pub iteration: usize,
    /// Set when the moment gap was unusable and a fallback value was
    /// returned.
    pub warning: bool,
}

/// Attack magnitude from the H0-block component gap:
/// delta = sqrt((mu01 - mu00) / (L sigma2 h^2)). A negative gap yields zero
/// with the warning flag set.
pub fn estimate_delta_h0(
    mixture: &MixtureEstimate,
    window_len: usize,
    sigma2: f64,
    h: f64,
    iteration: usize,
) -> DeltaEstimate {
    let gap = mixture.mu[0][1] - mixture.mu[0][0];
    if gap < 0.0 {
        return DeltaEstimate {
            delta_hat: 0.0,
            hypothesis_source: Hypothesis::H0,
            iteration,
            warning: true,
        };
    }
    DeltaEstimate {
        delta_hat: (gap / (window_len as f64 * sigma2 * h * h)).sqrt(),
        hypothesis_source: Hypothesis::H0,
        iteration,
        warning: false,
    }
}

/// Attack magnitude from the H1-block component gap and the output-mean
/// separation: the nested-radical inverse of the noncentrality shift. A
/// negative radicand keeps the previous estimate (warning set).
pub fn estimate_delta_h1(
    mixture: &MixtureEstimate,
    window_len: usize,
    h: f64,
    mu_j: f64,
    mu_k_est: f64,
    previous: Option<f64>,
    iteration: usize,
) -> DeltaEstimate {
    let gap = mixture.mu[1][1] - mixture.mu[1][0];
    let w = mu_j - mu_k_est;
    let radicand = gap / (window_len as f64 * h) + w * w / h;
    if radicand < 0.0 {
        return DeltaEstimate {
            delta_hat: previous.unwrap_or(0.0),
            hypothesis_source: Hypothesis::H1,
            iteration,
            warning: true,
        };
    }
    let delta = (radicand.sqrt() - w / h.sqrt()) / h.sqrt();
    DeltaEstimate {
        delta_hat: delta.max(0.0),
        hypothesis_source: Hypothesis::H1,
        iteration,
        warning: false,
    }
}

/// One completed detection window as consumed by the learning pipeline.
#[derive(Debug, Clone, Copy)]
pub struct WindowPoint {
    pub hypothesis: Hypothesis,
    pub t_value: f64,
    /// Window mean of the agent's own broadcasts.
    pub own_mean: f64,
    /// Window mean of the received (sensed) values from this neighbor.
    pub recv_mean: f64,
    /// Window mean of the received-value average over the whole
    /// in-neighborhood.
    pub neigh_mean: f64,
}

/// Per-iteration estimate snapshot, one CSV row of the learn output.
#[derive(Debug, Clone, Copy)]
pub struct LearningSnapshot {
    pub iteration: usize,
    pub pi1: f64,
    pub mu00: f64,
    pub mu01: f64,
    pub mu10: f64,
    pub mu11: f64,
    pub delta_hat: f64,
    pub classification: Classification,
}

/// Link constants the estimators need.
#[derive(Debug, Clone, Copy)]
pub struct LinkParams {
    pub window_len: usize,
    pub sigma2: f64,
    pub h: f64,
}

/// Streaming learning pipeline for one (agent, neighbor) pair: batches
/// window points into learning iterations, maintains the method-of-moments
/// and EM estimates, refines the neighbor-mean proxy, and tracks the
/// attack-magnitude estimate and classification.
#[derive(Debug, Clone)]
pub struct NeighborLearner {
    cfg: LearningConfig,
    link: LinkParams,
    pending: Vec<WindowPoint>,
    data: [Vec<f64>; 2],
    mom: [MomentEstimator; 2],
    mixture: Option<MixtureEstimate>,
    delta: Option<DeltaEstimate>,
    mu_k_est: Option<f64>,
    iteration: usize,
    was_ready: [bool; 2],
    delta_history: Vec<f64>,
    pub snapshots: Vec<LearningSnapshot>,
}

impl NeighborLearner {
    pub fn new(cfg: LearningConfig, link: LinkParams) -> Self {
        NeighborLearner {
            cfg,
            link,
            pending: Vec::new(),
            data: [Vec::new(), Vec::new()],
            mom: [MomentEstimator::new(), MomentEstimator::new()],
            mixture: None,
            delta: None,
            mu_k_est: None,
            iteration: 0,
            was_ready: [false, false],
            delta_history: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Latest per-iteration estimate.
    pub fn delta_estimate(&self) -> Option<DeltaEstimate> {
        self.delta
    }

    /// Median of the recent non-warning estimates; robust against a noisy
    /// final learning iteration.
    pub fn delta_consensus(&self) -> Option<f64> {
        let mut recent: Vec<f64> = self
            .delta_history
            .iter()
            .rev()
            .take(8)
            .copied()
            .collect();
        if recent.is_empty() {
            return None;
        }
        recent.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(recent[recent.len() / 2])
    }

    pub fn mixture(&self) -> Option<&MixtureEstimate> {
        self.mixture.as_ref()
    }

    pub fn iterations_run(&self) -> usize {
        self.iteration
    }

    /// Feed one completed window; runs a learning iteration every
    /// `points_per_iteration` windows (up to the configured maximum).
    pub fn push(&mut self, point: WindowPoint) {
        if self.iteration >= self.cfg.max_iterations {
            return;
        }
        self.pending.push(point);
        if self.pending.len() >= self.cfg.points_per_iteration {
            self.run_iteration();
        }
    }

    fn run_iteration(&mut self) {
        let batch = std::mem::take(&mut self.pending);
        let mut batch_t: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for p in &batch {
            batch_t[p.hypothesis.index()].push(p.t_value);
        }
        for b in 0..2 {
            self.mom[b].update(&batch_t[b]);
            self.data[b].extend_from_slice(&batch_t[b]);
        }
        self.iteration += 1;

        // per-hypothesis gating on cumulative counts
        let h0_ready = self.data[0].len() >= self.cfg.tau0;
        let h1_ready = self.data[1].len() >= self.cfg.tau1;
        if !h0_ready && !h1_ready {
            return;
        }
        let d0: &[f64] = if h0_ready { &self.data[0] } else { &[] };
        let d1: &[f64] = if h1_ready { &self.data[1] } else { &[] };

        // warm start from the previous fit, but let a block that just
        // crossed its sample threshold initialize from its own quantiles;
        // mirrored placeholder parameters would otherwise hand its data to
        // an arbitrary component
        let mut init = self.mixture.clone();
        if let Some(est) = init.as_mut() {
            for (b, ready) in [h0_ready, h1_ready].into_iter().enumerate() {
                if ready && !self.was_ready[b] {
                    let (mu, var) = block_init(&self.data[b]);
                    est.mu[b] = mu;
                    est.var[b] = var;
                }
            }
        }
        self.was_ready = [h0_ready, h1_ready];
        let Ok(mut est) = em_fit(d0, d1, init.as_ref(), &self.cfg) else {
            return;
        };
        orient_canonical(&mut est, [h0_ready, h1_ready]);

        // attack-magnitude estimation from whichever block carries a
        // genuinely bimodal component structure, preferring the
        // vandalism-keyed closed form. EM happily splits unimodal noise
        // into two overlapping humps, so the gap must clear an Ashman-style
        // separation test before it is read as an attack.
        let bimodal = |b: usize| {
            let gap = est.mu[b][1] - est.mu[b][0];
            gap > 3.0 * (2.0 * (est.var[b][0] + est.var[b][1])).sqrt() / std::f64::consts::SQRT_2
        };
        let delta = if h0_ready && !est.degenerate && bimodal(0) {
            estimate_delta_h0(&est, self.link.window_len, self.link.sigma2, self.link.h, self.iteration)
        } else if h1_ready && !est.degenerate && bimodal(1) {
            let h1_batch: Vec<&WindowPoint> = batch
                .iter()
                .filter(|p| p.hypothesis == Hypothesis::H1)
                .collect();
            if h1_batch.is_empty() {
                // no fresh H1 windows this iteration; carry the estimate
                self.delta
                    .map(|d| DeltaEstimate {
                        iteration: self.iteration,
                        ..d
                    })
                    .unwrap_or(DeltaEstimate {
                        delta_hat: 0.0,
                        hypothesis_source: Hypothesis::H1,
                        iteration: self.iteration,
                        warning: true,
                    })
            } else {
                let (mu_j, mu_k) = self.h1_means(&est, &h1_batch);
                estimate_delta_h1(
                    &est,
                    self.link.window_len,
                    self.link.h,
                    mu_j,
                    mu_k,
                    self.delta.map(|d| d.delta_hat),
                    self.iteration,
                )
            }
        } else {
            DeltaEstimate {
                delta_hat: 0.0,
                hypothesis_source: if h0_ready { Hypothesis::H0 } else { Hypothesis::H1 },
                iteration: self.iteration,
                warning: true,
            }
        };

        if !delta.warning {
            self.delta_history.push(delta.delta_hat);
        }
        self.mixture = Some(est);
        self.delta = Some(delta);
        let classification = self.classify();
        let est_ref = self.mixture.as_ref().unwrap();
        self.snapshots.push(LearningSnapshot {
            iteration: self.iteration,
            pi1: est_ref.pi[1],
            mu00: est_ref.mu[0][0],
            mu01: est_ref.mu[0][1],
            mu10: est_ref.mu[1][0],
            mu11: est_ref.mu[1][1],
            delta_hat: delta.delta_hat,
            classification,
        });
    }

    /// Own-output mean and the refined neighbor-mean proxy for the H1
    /// estimator. The proxy starts from the neighborhood average (all the
    /// agent can see initially) and is afterwards refined by undoing the
    /// falsification on the windows the fitted mixture attributes to the
    /// attacked component.
    fn h1_means(&mut self, est: &MixtureEstimate, h1_batch: &[&WindowPoint]) -> (f64, f64) {
        let n = h1_batch.len().max(1) as f64;
        let mu_j = h1_batch.iter().map(|p| p.own_mean).sum::<f64>() / n;
        let attacked = |t: f64| {
            est.pi[1].max(1e-300).ln() + log_gauss(t, est.mu[1][1], est.var[1][1])
                > est.pi[0].max(1e-300).ln() + log_gauss(t, est.mu[1][0], est.var[1][0])
        };
        let mu_k = match self.delta {
            Some(prev_delta) if !h1_batch.is_empty() => {
                let honest: Vec<f64> = h1_batch
                    .iter()
                    .filter(|p| !attacked(p.t_value))
                    .map(|p| p.recv_mean)
                    .collect();
                if !honest.is_empty() {
                    honest.iter().sum::<f64>() / honest.len() as f64
                } else {
                    // every window falsified: undo the previous estimate on
                    // the received mean (exploitation subtracts under H1)
                    let offset = self.link.h * prev_delta.delta_hat;
                    h1_batch.iter().map(|p| p.recv_mean).sum::<f64>() / n + offset
                }
            }
            _ => {
                if h1_batch.is_empty() {
                    self.mu_k_est.unwrap_or(0.0)
                } else {
                    h1_batch.iter().map(|p| p.neigh_mean).sum::<f64>() / n
                }
            }
        };
        self.mu_k_est = Some(mu_k);
        (mu_j, mu_k)
    }

    /// Current classification from the accumulated data.
    pub fn classify(&self) -> Classification {
        let Some(mix) = &self.mixture else {
            return Classification::Honest;
        };
        let d0: &[f64] = if self.data[0].len() >= self.cfg.tau0 {
            &self.data[0]
        } else {
            &[]
        };
        let d1: &[f64] = if self.data[1].len() >= self.cfg.tau1 {
            &self.data[1]
        } else {
            &[]
        };
        let f0 = self.mom[0].fit();
        let f1 = self.mom[1].fit();
        classify_neighbor(d0, d1, f0.as_ref(), f1.as_ref(), mix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::gaussian_pdf;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut ChaCha12Rng, mu: f64, var: f64) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        mu + var.sqrt() * z
    }

    #[test]
    fn mom_constant_stream() {
        let mut est = MomentEstimator::new();
        for _ in 0..7 {
            est.update(&[4.2; 10]);
        }
        assert!((est.mean() - 4.2).abs() < 1e-12);
        assert!(est.variance().abs() < 1e-12);
        assert_eq!(est.iterations(), 7);
    }

    #[test]
    fn mom_two_equal_batches() {
        let mut est = MomentEstimator::new();
        est.update(&[1.0, 1.0, 1.0]);
        est.update(&[3.0, 3.0, 3.0]);
        assert!((est.mean() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mom_equals_batch_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut est = MomentEstimator::new();
        let mut all = Vec::new();
        for _ in 0..30 {
            let batch: Vec<f64> = (0..20).map(|_| gauss(&mut rng, 15.0, 30.0)).collect();
            est.update(&batch);
            all.extend(batch);
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        assert!((est.mean() - mean).abs() < 1e-10);
        assert!((est.variance() - var).abs() < 1e-10);
    }

    #[test]
    fn mom_monte_carlo_consistency() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut est = MomentEstimator::new();
        for _ in 0..50 {
            let batch: Vec<f64> = (0..20).map(|_| gauss(&mut rng, 15.0, 30.0)).collect();
            est.update(&batch);
        }
        assert!((est.mean() - 15.0).abs() / 15.0 < 0.01, "mean {}", est.mean());
    }

    #[test]
    fn em_single_gaussian_degenerates_cleanly() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..400).map(|_| gauss(&mut rng, 10.0, 4.0)).collect();
        let cfg = LearningConfig::default();
        let est = em_fit(&data, &[], None, &cfg).unwrap();
        let (mle_mu, mle_var) = (
            data.iter().sum::<f64>() / 400.0,
            data.iter()
                .map(|t| (t - data.iter().sum::<f64>() / 400.0).powi(2))
                .sum::<f64>()
                / 400.0,
        );
        // combined density must match the single-Gaussian MLE closely:
        // compare average log-density over the sample (within 1%)
        let ll_mix: f64 = data
            .iter()
            .map(|&t| log_mix_pdf(t, &est.pi, &est.mu[0], &est.var[0]))
            .sum::<f64>()
            / 400.0;
        let ll_gauss: f64 = data
            .iter()
            .map(|&t| log_gauss(t, mle_mu, mle_var))
            .sum::<f64>()
            / 400.0;
        assert!(
            (ll_mix - ll_gauss).abs() / ll_gauss.abs() < 0.01,
            "mix {ll_mix} vs gauss {ll_gauss}"
        );
    }

    #[test]
    fn em_separates_two_clusters() {
        // labeled synthetic data is the oracle: the fit must recover the
        // split and the per-label sample means
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut data = Vec::new();
        let mut low = Vec::new();
        let mut high = Vec::new();
        for _ in 0..280 {
            let v = gauss(&mut rng, 95.0, 30.0);
            high.push(v);
            data.push(v);
        }
        for _ in 0..120 {
            let v = gauss(&mut rng, 15.0, 30.0);
            low.push(v);
            data.push(v);
        }
        let low_mean = low.iter().sum::<f64>() / low.len() as f64;
        let high_mean = high.iter().sum::<f64>() / high.len() as f64;
        let cfg = LearningConfig::default();
        let mut est = em_fit(&data, &[], None, &cfg).unwrap();
        orient_ascending(&mut est, Hypothesis::H0);
        assert!((est.pi[0] - 0.30).abs() < 0.05, "pi0 {}", est.pi[0]);
        assert!((est.pi[1] - 0.70).abs() < 0.05);
        assert!(
            (est.mu[0][0] - low_mean).abs() / low_mean.abs() < 0.05,
            "low mean {} vs labeled {}",
            est.mu[0][0],
            low_mean
        );
        assert!((est.mu[0][1] - high_mean).abs() / high_mean < 0.05);
        // and the generative means are recovered to a few percent as well
        assert!((est.mu[0][0] - 15.0).abs() / 15.0 < 0.15);
        assert!((est.mu[0][1] - 95.0).abs() / 95.0 < 0.05);
    }

    #[test]
    fn em_log_likelihood_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut data0 = Vec::new();
        let mut data1 = Vec::new();
        for _ in 0..150 {
            data0.push(if rng.gen::<f64>() < 0.6 {
                gauss(&mut rng, 50.0, 9.0)
            } else {
                gauss(&mut rng, 10.0, 4.0)
            });
            data1.push(if rng.gen::<f64>() < 0.6 {
                gauss(&mut rng, 80.0, 16.0)
            } else {
                gauss(&mut rng, 30.0, 9.0)
            });
        }
        let est = em_fit(&data0, &data1, None, &LearningConfig::default()).unwrap();
        for w in est.ll_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()), "ll decreased: {w:?}");
        }
    }

    #[test]
    fn em_matches_batch_oracle() {
        // from-scratch single-block two-component EM, written independently
        fn oracle_em(data: &[f64], init_mu: [f64; 2], init_var: [f64; 2]) -> f64 {
            let n = data.len() as f64;
            let mut pi = [0.5, 0.5];
            let mut mu = init_mu;
            let mut var = init_var;
            let mut last = f64::NEG_INFINITY;
            for _ in 0..2000 {
                let mut num_mu = [0.0; 2];
                let mut mass = [0.0; 2];
                let mut resp = Vec::with_capacity(data.len());
                for &t in data {
                    let p0 = pi[0] * gaussian_pdf(t, mu[0], var[0]);
                    let p1 = pi[1] * gaussian_pdf(t, mu[1], var[1]);
                    let s = (p0 + p1).max(1e-300);
                    let r = [p0 / s, p1 / s];
                    mass[0] += r[0];
                    mass[1] += r[1];
                    num_mu[0] += r[0] * t;
                    num_mu[1] += r[1] * t;
                    resp.push(r);
                }
                for j in 0..2 {
                    mu[j] = num_mu[j] / mass[j];
                }
                let mut num_var = [0.0; 2];
                for (&t, r) in data.iter().zip(&resp) {
                    for j in 0..2 {
                        num_var[j] += r[j] * (t - mu[j]).powi(2);
                    }
                }
                for j in 0..2 {
                    var[j] = (num_var[j] / mass[j]).max(VAR_FLOOR);
                    pi[j] = mass[j] / n;
                }
                let ll: f64 = data
                    .iter()
                    .map(|&t| {
                        (pi[0] * gaussian_pdf(t, mu[0], var[0])
                            + pi[1] * gaussian_pdf(t, mu[1], var[1]))
                        .max(1e-300)
                        .ln()
                    })
                    .sum();
                if (ll - last).abs() < 1e-12 * (1.0 + ll.abs()) {
                    return ll;
                }
                last = ll;
            }
            last
        }

        let mut cfg = LearningConfig::default();
        cfg.em_tol = 1e-13;
        cfg.em_max_iter = 2000;
        for seed in 0..10u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(100 + seed);
            let data: Vec<f64> = (0..300)
                .map(|_| {
                    if rng.gen::<f64>() < 0.65 {
                        gauss(&mut rng, 60.0, 25.0)
                    } else {
                        gauss(&mut rng, 20.0, 16.0)
                    }
                })
                .collect();
            let est = em_fit(&data, &[], None, &cfg).unwrap();
            let mut sorted = data.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let init_mu = [percentile(&sorted, 0.25), percentile(&sorted, 0.75)];
            let mean = data.iter().sum::<f64>() / 300.0;
            let sv = data.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 300.0;
            let v0 = (0.5 * sv).max(VAR_FLOOR);
            let oracle_ll = oracle_em(&data, init_mu, [v0, v0]);
            assert!(
                (est.log_likelihood - oracle_ll).abs() < 1e-6,
                "seed {seed}: {} vs {oracle_ll}",
                est.log_likelihood
            );
        }
    }

    fn synth_byzantine(seed: u64, n: usize, p: f64, mu0: f64, v0: f64, mu1: f64, v1: f64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                if rng.gen::<f64>() < p {
                    gauss(&mut rng, mu1, v1)
                } else {
                    gauss(&mut rng, mu0, v0)
                }
            })
            .collect()
    }

    #[test]
    fn classification_frequencies() {
        let cfg = LearningConfig::default();
        // honest data: component collapse or near-identical fit -> Honest
        let mut honest_ok = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + seed);
            let data: Vec<f64> = (0..400).map(|_| gauss(&mut rng, 14.64, 35.7)).collect();
            let est = em_fit(&data, &[], None, &cfg).unwrap();
            let mut mom = MomentEstimator::new();
            mom.update(&data);
            let fit = mom.fit().unwrap();
            if classify_neighbor(&data, &[], Some(&fit), None, &est) == Classification::Honest {
                honest_ok += 1;
            }
        }
        assert!(honest_ok >= 95, "honest classified {honest_ok}/100");

        // Byzantine data at the data-falsification example scale
        let l = 12;
        let s2 = 1.22;
        let m = crate::detection::link_moments(l, s2, 1.0, 8.0, 0.0, 0.0);
        let mut byz_ok = 0;
        for seed in 0..100u64 {
            let data = synth_byzantine(2000 + seed, 400, 0.7, m.mu00, m.var00, m.mu01, m.var01);
            let est = em_fit(&data, &[], None, &cfg).unwrap();
            let mut mom = MomentEstimator::new();
            mom.update(&data);
            let fit = mom.fit().unwrap();
            if classify_neighbor(&data, &[], Some(&fit), None, &est) == Classification::Byzantine {
                byz_ok += 1;
            }
        }
        assert!(byz_ok >= 95, "byzantine classified {byz_ok}/100");
    }

    #[test]
    fn classification_tie_breaks_honest() {
        let data = vec![1.0, 2.0, 3.0, 2.0, 1.5];
        let mut mom = MomentEstimator::new();
        mom.update(&data);
        let fit = mom.fit().unwrap();
        // mixture collapsed exactly onto the Gaussian
        let est = MixtureEstimate {
            mu: [[fit.mu, fit.mu], [fit.mu, fit.mu]],
            var: [[fit.var, fit.var], [fit.var, fit.var]],
            pi: [1.0, 0.0],
            log_likelihood: 0.0,
            ll_history: vec![],
            degenerate: true,
        };
        assert_eq!(
            classify_neighbor(&data, &[], Some(&fit), None, &est),
            Classification::Honest
        );
    }

    #[test]
    fn delta_h0_cases() {
        let mk = |mu00: f64, mu01: f64| MixtureEstimate {
            mu: [[mu00, mu01], [0.0, 0.0]],
            var: [[1.0, 1.0], [1.0, 1.0]],
            pi: [0.5, 0.5],
            log_likelihood: 0.0,
            ll_history: vec![],
            degenerate: false,
        };
        // exact moment gap inverts to the true delta
        let (l, s2, h, delta) = (15usize, 1.3, 0.9, 2.0);
        let gap = l as f64 * h * h * delta * delta * s2;
        let est = estimate_delta_h0(&mk(10.0, 10.0 + gap), l, s2, h, 1);
        assert!((est.delta_hat - delta).abs() < 1e-12);

        // hand value: (28.824 - 15) / (15 * 1 * 0.96^2) = 1
        let est = estimate_delta_h0(&mk(15.0, 28.824), 15, 1.0, 0.96, 1);
        assert!((est.delta_hat - 1.0).abs() < 1e-12);

        // zero gap -> zero estimate
        let est = estimate_delta_h0(&mk(15.0, 15.0), 15, 1.0, 1.0, 1);
        assert_eq!(est.delta_hat, 0.0);
        assert!(!est.warning);

        // negative gap -> zero with warning
        let est = estimate_delta_h0(&mk(15.0, 14.0), 15, 1.0, 1.0, 1);
        assert_eq!(est.delta_hat, 0.0);
        assert!(est.warning);
    }

    #[test]
    fn delta_h1_cases() {
        let mk = |mu10: f64, mu11: f64| MixtureEstimate {
            mu: [[0.0, 0.0], [mu10, mu11]],
            var: [[1.0, 1.0], [1.0, 1.0]],
            pi: [0.5, 0.5],
            log_likelihood: 0.0,
            ll_history: vec![],
            degenerate: false,
        };
        // exact inversion with known means, h = 1, any delta >= 0
        for delta in [0.0, 0.5, 3.0, 8.0] {
            let (l, h) = (12usize, 1.0);
            let (mu_j, mu_k) = (2.0, -1.0);
            let gap = l as f64 * (h * h * delta * delta + 2.0 * h * delta * (mu_j - mu_k));
            let est = estimate_delta_h1(&mk(20.0, 20.0 + gap), l, h, mu_j, mu_k, None, 1);
            assert!((est.delta_hat - delta).abs() < 1e-10, "delta {delta}");
        }
        // exact inversion with channel gain != 1
        let (l, h, delta) = (10usize, 0.8, 2.5);
        let (mu_j, mu_k) = (1.0, 0.2);
        let gap = l as f64 * (h * h * delta * delta + 2.0 * h * delta * (mu_j - mu_k));
        let est = estimate_delta_h1(&mk(5.0, 5.0 + gap), l, h, mu_j, mu_k, None, 1);
        assert!((est.delta_hat - delta).abs() < 1e-10);

        // zero gap and equal means -> zero
        let est = estimate_delta_h1(&mk(20.0, 20.0), 12, 1.0, 1.5, 1.5, None, 1);
        assert_eq!(est.delta_hat, 0.0);

        // negative radicand -> previous estimate with warning
        let est = estimate_delta_h1(&mk(100.0, 0.0), 12, 1.0, 0.0, 0.0, Some(7.7), 1);
        assert_eq!(est.delta_hat, 7.7);
        assert!(est.warning);
    }

    #[test]
    fn delta_consistency_improves_with_data() {
        // error shrinks from 400 to 4000 windows with the exact generative
        // parameters
        let l = 12;
        let s2 = 1.22;
        let m = crate::detection::link_moments(l, s2, 1.0, 8.0, 0.0, 0.0);
        let cfg = LearningConfig::default();
        let mut errs = Vec::new();
        for n in [400usize, 4000] {
            let data = synth_byzantine(31, n, 0.7, m.mu00, m.var00, m.mu01, m.var01);
            let mut est = em_fit(&data, &[], None, &cfg).unwrap();
            orient_ascending(&mut est, Hypothesis::H0);
            let d = estimate_delta_h0(&est, l, s2, 1.0, 1);
            errs.push((d.delta_hat - 8.0).abs());
        }
        assert!(errs[1] < errs[0], "errors {errs:?}");
    }
}
