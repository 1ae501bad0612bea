//! The deterministic simulation loop: fixed-step integration under
//! zero-order-hold inputs, two-phase trigger evaluation and broadcast,
//! hypothesis-keyed falsification, detection sampling on its own clock,
//! online learning and scheduled mitigation, with CSV-ready trace capture.

use crate::attack::{
    falsify, manipulate_weights, sense, ByzantineProfile, ChannelModel, RngStreams, StreamPurpose,
};
use crate::detection::{sync_decision, DetectionConfig, SamplePair, SummaryStatistic};
use crate::dynamics::{step, AgentModel, AgentState, PassivityRecord};
use crate::fmt_f64;
use crate::graph;
use crate::learning::{Classification, LearningSnapshot, LinkParams, NeighborLearner, WindowPoint};
use crate::mitigation::{correct_output, honest_only_decision};
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::trigger::{check_trigger, zeno_report, TriggerConfig, TriggerState, ZenoReport};
use crate::Hypothesis;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error("agent {agent} diverged at t = {t}")]
    NonFinite { agent: usize, t: f64 },
}

/// One recorded instant of the run.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub err: Vec<f64>,
    pub event_count: Vec<usize>,
    /// Per-agent synchronization decision: -1 before windows fill, else 0/1.
    pub decision: Vec<i8>,
    pub y_bar: f64,
    pub y_delta_inf: f64,
    pub true_hyp: i8,
}

/// One completed detection window on a link, as written to the windows CSV
/// and consumed by the offline learning command.
#[derive(Debug, Clone)]
pub struct WindowRow {
    pub t: f64,
    pub agent: usize,
    pub neighbor: usize,
    /// Hypothesis label from the agent's own decision; -1 while undecided.
    pub label: i8,
    pub t_value: f64,
    pub eta: f64,
    pub own_mean: f64,
    pub recv_mean: f64,
    pub neigh_mean: f64,
    pub window_len: usize,
    pub sigma2: f64,
    pub h: f64,
}

/// Noiseless per-link window statistics for the analysis agent, frozen for
/// the analytic sweeps.
#[derive(Debug, Clone)]
pub struct LinkSnapshot {
    pub neighbor: usize,
    pub eta: f64,
    pub mu_k: f64,
    pub mu_j: f64,
}

#[derive(Debug, Clone)]
pub struct WindowSnapshot {
    pub t: f64,
    pub agent: usize,
    pub links: Vec<LinkSnapshot>,
}

#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub agent: usize,
    pub neighbor: usize,
    pub snapshot: LearningSnapshot,
}

#[derive(Debug, Clone)]
pub struct ClassificationRow {
    pub agent: usize,
    pub neighbor: usize,
    pub classification: Classification,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub n: usize,
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub windows: Vec<WindowRow>,
    pub snapshots: Vec<WindowSnapshot>,
    pub estimates: Vec<EstimateRow>,
    pub zeno: Vec<ZenoReport>,
    /// Full-resolution passivity bookkeeping per agent.
    pub passivity: Vec<Vec<PassivityRecord>>,
    pub classifications: Vec<ClassificationRow>,
    pub final_outputs: Vec<f64>,
}

impl SimulationTrace {
    pub fn final_y_delta_inf(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.y_delta_inf)
    }

    pub fn consensus(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.y_bar)
    }

    /// Mean of the synchronization error over recorded rows in [t0, t1].
    pub fn mean_y_delta_inf(&self, t0: f64, t1: f64) -> f64 {
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.t >= t0 && r.t <= t1)
            .map(|r| r.y_delta_inf)
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }

    /// Snapshot at or after the requested instant (last one otherwise).
    pub fn snapshot_at(&self, t: f64) -> Option<&WindowSnapshot> {
        self.snapshots
            .iter()
            .find(|s| s.t >= t)
            .or_else(|| self.snapshots.last())
    }
}

struct LinkState {
    neighbor: usize,
    channel: ChannelModel,
    stat: SummaryStatistic,
    rng: ChaCha12Rng,
    learner: Option<NeighborLearner>,
    classification: Classification,
    delta_hat: Option<f64>,
}

/// Run one scenario to completion. Identical config and seed produce a
/// bit-identical trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimulationTrace, SimError> {
    let n = cfg.n();
    let design = cfg.graph()?;
    let profiles = cfg.profiles();
    let attacked = manipulate_weights(&design, &profiles, cfg.mitigation.mode);
    let lambda_g = cfg
        .expected_lambda
        .map(Ok)
        .unwrap_or_else(|| graph::algebraic_connectivity(&design))?;
    let deltas = cfg.resolve_deltas(lambda_g)?;

    let dt = cfg.sim.dt;
    let steps = (cfg.sim.t_end / dt).round() as usize;
    let ts_stride = ((cfg.detection_ts() / dt).round() as usize).max(1);
    let det_cfg = DetectionConfig {
        window_len: cfg.detection.window_len,
        lambda_margin: cfg.detection.lambda_margin,
        ts: cfg.detection_ts(),
    };
    let streams = RngStreams::new(cfg.sim.seed);

    let models: Vec<AgentModel> = cfg.agents.iter().map(|a| AgentModel::new(a.c, a.x0)).collect();
    let mut states: Vec<AgentState> = models.iter().map(AgentState::initial).collect();
    let mut trig_cfg: Vec<TriggerConfig> = deltas
        .iter()
        .map(|&d| TriggerConfig {
            delta: d,
            c_offset: cfg.trigger.c_offset,
            alpha: cfg.trigger.alpha,
            beta: cfg.trigger.beta,
        })
        .collect();
    let mut trig_state: Vec<TriggerState> =
        states.iter().map(|s| TriggerState::new(s.y)).collect();

    let mut profile_of: Vec<Option<ByzantineProfile>> = vec![None; n];
    for p in &profiles {
        profile_of[p.agent_id] = Some(p.clone());
    }
    let mut attack_rngs: Vec<ChaCha12Rng> = (0..n)
        .map(|j| streams.stream(StreamPurpose::Attack, j as u64, 0))
        .collect();

    // detection listens on the design topology; control gains come from the
    // attacked graph
    let learn_cfg = cfg.learning.as_ref().map(|l| l.to_config());
    let mut links: Vec<Vec<LinkState>> = (0..n)
        .map(|j| {
            design
                .in_neighbors(j)
                .iter()
                .map(|&(k, _)| {
                    let channel = ChannelModel {
                        h: cfg.channels.h.at(k, j),
                        sigma2: cfg.channels.sigma2.at(k, j),
                    };
                    LinkState {
                        neighbor: k,
                        channel,
                        stat: SummaryStatistic::new(det_cfg.window_len),
                        rng: streams.stream(StreamPurpose::Noise, k as u64, j as u64),
                        learner: learn_cfg.as_ref().map(|lc| {
                            NeighborLearner::new(
                                lc.clone(),
                                LinkParams {
                                    window_len: det_cfg.window_len,
                                    sigma2: channel.sigma2,
                                    h: channel.h,
                                },
                            )
                        }),
                        classification: Classification::Honest,
                        delta_hat: None,
                    }
                })
                .collect()
        })
        .collect();
    let mut control_rngs: Vec<Vec<ChaCha12Rng>> = (0..n)
        .map(|j| {
            design
                .in_neighbors(j)
                .iter()
                .map(|&(k, _)| streams.stream(StreamPurpose::ControlNoise, k as u64, j as u64))
                .collect()
        })
        .collect();

    let correction = &cfg.mitigation.data_correction;
    let mut retunes: Vec<(f64, usize, f64, bool)> = cfg
        .mitigation
        .retune
        .iter()
        .map(|r| (r.t, r.agent, r.delta, false))
        .collect();
    for r in retunes.iter_mut() {
        if r.0 <= 0.0 {
            trig_cfg[r.1].delta = r.2;
            r.3 = true;
        }
    }

    // initial broadcast so every neighbor holds a defined value
    let y0: Vec<f64> = states.iter().map(|s| s.y).collect();
    let mut true_hyp = hypothesis_of(&y0, cfg.sim.sync_eps);
    let mut broadcast: Vec<f64> = (0..n)
        .map(|j| match &profile_of[j] {
            Some(p) => falsify(states[j].y, p, true_hyp, 0.0, &mut attack_rngs[j]),
            None => states[j].y,
        })
        .collect();

    let mut decisions: Vec<i8> = vec![-1; n];
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut windows: Vec<WindowRow> = Vec::new();
    let mut snapshots: Vec<WindowSnapshot> = Vec::new();
    let mut passivity: Vec<Vec<PassivityRecord>> = vec![Vec::new(); n];

    let record = |rows: &mut Vec<TraceRow>,
                  t: f64,
                  states: &[AgentState],
                  trig_state: &[TriggerState],
                  decisions: &[i8],
                  hyp: Hypothesis| {
        let y: Vec<f64> = states.iter().map(|s| s.y).collect();
        let (y_bar, yd) = graph::sync_measure(&y);
        rows.push(TraceRow {
            t,
            y: y.clone(),
            u: states.iter().map(|s| s.u_held).collect(),
            err: trig_state.iter().map(|s| s.error).collect(),
            event_count: trig_state.iter().map(|s| s.event_times.len()).collect(),
            decision: decisions.to_vec(),
            y_bar,
            y_delta_inf: yd.iter().fold(0.0, |m, v| m.max(v.abs())),
            true_hyp: hyp.index() as i8,
        });
    };
    record(&mut rows, 0.0, &states, &trig_state, &decisions, true_hyp);
    for j in 0..n {
        passivity[j].push(PassivityRecord {
            u: states[j].u_held,
            y: states[j].y,
            storage: states[j].storage,
            supplied: states[j].supplied,
        });
    }

    let learning_window = cfg.learning.as_ref().map(|l| (l.t_start, l.t_end));

    for s in 1..=steps {
        let t = s as f64 * dt;

        // scheduled trigger retuning
        for r in retunes.iter_mut() {
            if !r.3 && t >= r.0 {
                trig_cfg[r.1].delta = r.2;
                r.3 = true;
            }
        }
        let correcting = correction.enable && t >= correction.t_start;

        // control inputs from held values (corrected where mitigation is on)
        for j in 0..n {
            let mut u = 0.0;
            for (idx, link) in links[j].iter().enumerate() {
                let k = link.neighbor;
                let gain = attacked.weight(k, j);
                let mut v = broadcast[k];
                if correcting && link.classification == Classification::Byzantine {
                    // corrections below the channel noise floor would inject
                    // more error than they remove
                    if let Some(dh) = link.delta_hat.filter(|dh| *dh > link.channel.sigma2.sqrt()) {
                        let dev = v - states[j].y;
                        if dev.abs() > dh / 2.0 {
                            let hyp = if dev > 0.0 { Hypothesis::H0 } else { Hypothesis::H1 };
                            v = correct_output(v, dh, hyp);
                        }
                    }
                }
                if cfg.sim.noisy_control {
                    v = sense(v, &link.channel, &mut control_rngs[j][idx]);
                }
                u += gain * (v - trig_state[j].last_sent);
            }
            states[j].u_held = u;
        }

        // integrate
        for j in 0..n {
            states[j] = step(&states[j], &models[j], dt)
                .map_err(|_| SimError::NonFinite { agent: j, t })?;
            trig_state[j].update_error(states[j].y);
            passivity[j].push(PassivityRecord {
                u: states[j].u_held,
                y: states[j].y,
                storage: states[j].storage,
                supplied: states[j].supplied,
            });
        }

        let y_now: Vec<f64> = states.iter().map(|s| s.y).collect();
        true_hyp = hypothesis_of(&y_now, cfg.sim.sync_eps);

        // two-phase: evaluate all triggers, then broadcast simultaneously
        let fire: Vec<bool> = (0..n)
            .map(|j| check_trigger(states[j].y, trig_state[j].last_sent, &trig_cfg[j]))
            .collect();
        for j in 0..n {
            if fire[j] {
                trig_state[j].record_event(t, states[j].y);
                broadcast[j] = match &profile_of[j] {
                    Some(p) => falsify(states[j].y, p, true_hyp, t, &mut attack_rngs[j]),
                    None => states[j].y,
                };
            }
        }

        // detection sampling on the Ts clock
        if s % ts_stride == 0 {
            let learning_now = learning_window
                .map(|(a, b)| t >= a && t <= b)
                .unwrap_or(false);
            for j in 0..n {
                for link in links[j].iter_mut() {
                    let k = link.neighbor;
                    let received = sense(broadcast[k], &link.channel, &mut link.rng);
                    link.stat.update(SamplePair {
                        received,
                        own_sent: trig_state[j].last_sent,
                        signal: link.channel.h * trig_state[k].last_sent,
                    });
                }
                if links[j].is_empty() || !links[j].iter().all(|l| l.stat.is_full()) {
                    continue;
                }

                // decision: honest-only once classifications exist
                let stats: Vec<&SummaryStatistic> = links[j].iter().map(|l| &l.stat).collect();
                let sigma2s: Vec<f64> = links[j].iter().map(|l| l.channel.sigma2).collect();
                let any_flagged = links[j]
                    .iter()
                    .any(|l| l.classification == Classification::Byzantine);
                let dec = if any_flagged {
                    let cls: Vec<Classification> =
                        links[j].iter().map(|l| l.classification).collect();
                    honest_only_decision(&stats, &cls, &det_cfg, &sigma2s)
                        .or_else(|_| sync_decision(&stats, &det_cfg, &sigma2s))
                } else {
                    sync_decision(&stats, &det_cfg, &sigma2s)
                };
                let Ok(dec) = dec else { continue };
                decisions[j] = dec.index() as i8;

                let neigh_mean = links[j]
                    .iter()
                    .map(|l| l.stat.received_mean())
                    .sum::<f64>()
                    / links[j].len() as f64;

                for link in links[j].iter_mut() {
                    windows.push(WindowRow {
                        t,
                        agent: j,
                        neighbor: link.neighbor,
                        label: dec.index() as i8,
                        t_value: link.stat.t_value(),
                        eta: link.stat.eta(link.channel.sigma2),
                        own_mean: link.stat.own_mean(),
                        recv_mean: link.stat.received_mean(),
                        neigh_mean,
                        window_len: det_cfg.window_len,
                        sigma2: link.channel.sigma2,
                        h: link.channel.h,
                    });
                    if learning_now {
                        if let Some(learner) = link.learner.as_mut() {
                            learner.push(WindowPoint {
                                hypothesis: dec,
                                t_value: link.stat.t_value(),
                                own_mean: link.stat.own_mean(),
                                recv_mean: link.stat.received_mean(),
                                neigh_mean,
                            });
                            if let Some(snap) = learner.snapshots.last() {
                                link.classification = snap.classification;
                                link.delta_hat = learner.delta_consensus();
                            }
                        }
                    }
                }

                if cfg.analysis.as_ref().map(|a| a.agent) == Some(j) {
                    snapshots.push(WindowSnapshot {
                        t,
                        agent: j,
                        links: links[j]
                            .iter()
                            .map(|l| LinkSnapshot {
                                neighbor: l.neighbor,
                                eta: l.stat.eta(l.channel.sigma2),
                                mu_k: l.stat.signal_mean(),
                                mu_j: l.stat.own_mean(),
                            })
                            .collect(),
                    });
                }
            }
        }

        if s % cfg.sim.record_stride == 0 || s == steps {
            record(&mut rows, t, &states, &trig_state, &decisions, true_hyp);
        }
    }

    let mut estimates = Vec::new();
    let mut classifications = Vec::new();
    for j in 0..n {
        for link in &links[j] {
            if let Some(learner) = &link.learner {
                for snap in &learner.snapshots {
                    estimates.push(EstimateRow {
                        agent: j,
                        neighbor: link.neighbor,
                        snapshot: *snap,
                    });
                }
            }
            classifications.push(ClassificationRow {
                agent: j,
                neighbor: link.neighbor,
                classification: link.classification,
            });
        }
    }

    Ok(SimulationTrace {
        n,
        dt,
        rows,
        windows,
        snapshots,
        estimates,
        zeno: trig_state.iter().map(zeno_report).collect(),
        passivity,
        classifications,
        final_outputs: states.iter().map(|s| s.y).collect(),
    })
}

fn hypothesis_of(y: &[f64], sync_eps: f64) -> Hypothesis {
    if graph::sync_error_inf(y) < sync_eps {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

/// Main trace as CSV: one row per recorded instant.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = String::new();
    out.push_str("t");
    for j in 0..trace.n {
        out.push_str(&format!(",y{j}"));
    }
    for j in 0..trace.n {
        out.push_str(&format!(",u{j}"));
    }
    for j in 0..trace.n {
        out.push_str(&format!(",e{j}"));
    }
    for j in 0..trace.n {
        out.push_str(&format!(",events{j}"));
    }
    for j in 0..trace.n {
        out.push_str(&format!(",dec{j}"));
    }
    out.push_str(",y_bar,y_delta_inf,true_hyp\n");
    for r in &trace.rows {
        out.push_str(&fmt_f64(r.t));
        for v in &r.y {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in &r.u {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in &r.err {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in &r.event_count {
            out.push_str(&format!(",{v}"));
        }
        for v in &r.decision {
            out.push_str(&format!(",{v}"));
        }
        out.push(',');
        out.push_str(&fmt_f64(r.y_bar));
        out.push(',');
        out.push_str(&fmt_f64(r.y_delta_inf));
        out.push_str(&format!(",{}\n", r.true_hyp));
    }
    out
}

/// Window statistics as CSV, self-contained for offline learning.
pub fn windows_csv(trace: &SimulationTrace) -> String {
    let mut out =
        String::from("t,agent,neighbor,label,t_value,eta,own_mean,recv_mean,neigh_mean,l,sigma2,h\n");
    for w in &trace.windows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(w.t),
            w.agent,
            w.neighbor,
            w.label,
            fmt_f64(w.t_value),
            fmt_f64(w.eta),
            fmt_f64(w.own_mean),
            fmt_f64(w.recv_mean),
            fmt_f64(w.neigh_mean),
            w.window_len,
            fmt_f64(w.sigma2),
            fmt_f64(w.h)
        ));
    }
    out
}

/// Per-iteration estimator trajectories as CSV.
pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(
        "agent,neighbor,iteration,pi1,mu00,mu01,mu10,mu11,delta_hat,classification\n",
    );
    for r in rows {
        let s = &r.snapshot;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.agent,
            r.neighbor,
            s.iteration,
            fmt_f64(s.pi1),
            fmt_f64(s.mu00),
            fmt_f64(s.mu01),
            fmt_f64(s.mu10),
            fmt_f64(s.mu11),
            fmt_f64(s.delta_hat),
            match s.classification {
                Classification::Honest => "honest",
                Classification::Byzantine => "byzantine",
            }
        ));
    }
    out
}
