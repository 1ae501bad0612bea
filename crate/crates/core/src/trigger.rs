//! Event-trigger design and evaluation: the synchronization design bound
//! for the trigger gain, the trigger test itself, the diffusive control
//! input built from last-transmitted values, and Zeno monitoring.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("design bound {bound} is not positive; no feasible trigger gain for d_in={d_in}, lambda={lambda_g}, rho={rho}")]
    InfeasibleDesign {
        bound: f64,
        d_in: f64,
        lambda_g: f64,
        rho: f64,
    },
}

/// Per-agent trigger parameters. `c_offset` is the additive constant that
/// buys a positive lower bound on inter-event times at the price of a
/// nonzero steady-state synchronization error.
#[derive(Debug, Clone, Copy)]
pub struct TriggerConfig {
    pub delta: f64,
    pub c_offset: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Broadcast bookkeeping for one agent. `last_sent` is the agent's own most
/// recently transmitted output; the trigger error is measured against it and
/// resets to zero at each event.
#[derive(Debug, Clone)]
pub struct TriggerState {
    pub last_sent: f64,
    pub error: f64,
    pub event_times: Vec<f64>,
    pub min_interval: f64,
}

impl TriggerState {
    pub fn new(initial_output: f64) -> Self {
        TriggerState {
            last_sent: initial_output,
            error: 0.0,
            event_times: Vec::new(),
            min_interval: f64::INFINITY,
        }
    }

    pub fn update_error(&mut self, y: f64) {
        self.error = y - self.last_sent;
    }

    pub fn record_event(&mut self, t: f64, y: f64) {
        if let Some(&last) = self.event_times.last() {
            self.min_interval = self.min_interval.min(t - last);
        }
        self.event_times.push(t);
        self.last_sent = y;
        self.error = 0.0;
    }
}

/// Right-hand side of the trigger-gain design bound
/// ((2/d_in)(lambda + rho) - 1/alpha - 1/beta) / (alpha + beta).
/// The caller picks any gain in (0, bound].
pub fn design_delta(
    d_in: f64,
    lambda_g: f64,
    rho: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64, TriggerError> {
    assert!(d_in > 0.0 && alpha > 0.0 && beta > 0.0);
    let bound = ((2.0 / d_in) * (lambda_g + rho) - 1.0 / alpha - 1.0 / beta) / (alpha + beta);
    if bound <= 0.0 {
        return Err(TriggerError::InfeasibleDesign {
            bound,
            d_in,
            lambda_g,
            rho,
        });
    }
    Ok(bound)
}

/// Strict trigger test ||e||^2 > delta ||y||^2 + c. On `true` the caller
/// broadcasts the current output and the error resets to zero.
pub fn check_trigger(y: f64, last_sent: f64, cfg: &TriggerConfig) -> bool {
    let e = y - last_sent;
    e * e > cfg.delta * y * y + cfg.c_offset
}

/// Diffusive input from last-transmitted values: sum of gain * (received -
/// own last sent) over the in-neighborhood. Both operands are held values,
/// not instantaneous states.
pub fn control_input(received: &[(f64, f64)], own_last_sent: f64) -> f64 {
    received
        .iter()
        .map(|(gain, value)| gain * (value - own_last_sent))
        .sum()
}

/// Event count and minimum inter-event interval observed in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoReport {
    pub event_count: usize,
    pub min_interval: f64,
}

/// Summarize the trigger activity; a finite count with min interval at or
/// above the integration step certifies the event-triggered premise on the
/// grid.
pub fn zeno_report(state: &TriggerState) -> ZenoReport {
    ZenoReport {
        event_count: state.event_times.len(),
        min_interval: state.min_interval,
    }
}
