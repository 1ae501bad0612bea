//! First-order output-passive plants x' = -c x + u with y = x, integrated
//! by classical RK4 under zero-order-hold inputs, plus passivity
//! bookkeeping (storage and supplied energy).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state left finite range at x = {0}")]
    NonFinite(f64),
}

/// Plant parameters. For this family the output passivity index equals the
/// damping coefficient: V = x^2/2 gives V' = u y - c y^2.
#[derive(Debug, Clone, Copy)]
pub struct AgentModel {
    pub c: f64,
    pub rho: f64,
    pub x0: f64,
}

impl AgentModel {
    pub fn new(c: f64, x0: f64) -> Self {
        AgentModel { c, rho: c, x0 }
    }
}

/// Instantaneous plant state. `supplied` accumulates the integral of the
/// supply rate u y - rho y^2 along the trajectory, evaluated with the same
/// RK4 stages as the state so the dissipation residual stays at integrator
/// accuracy even across input switches.
#[derive(Debug, Clone, Copy)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub u_held: f64,
    pub storage: f64,
    pub supplied: f64,
}

impl AgentState {
    pub fn initial(model: &AgentModel) -> Self {
        AgentState {
            x: model.x0,
            y: model.x0,
            u_held: 0.0,
            storage: 0.5 * model.x0 * model.x0,
            supplied: 0.0,
        }
    }
}

/// Advance one RK4 step of x' = -c x + u with the held input.
pub fn step(state: &AgentState, model: &AgentModel, dt: f64) -> Result<AgentState, DynamicsError> {
    debug_assert!(dt > 0.0);
    let u = state.u_held;
    let f = |x: f64| -model.c * x + u;
    let w = |x: f64| u * x - model.rho * x * x;

    let x0 = state.x;
    let k1 = f(x0);
    let x1 = x0 + 0.5 * dt * k1;
    let k2 = f(x1);
    let x2 = x0 + 0.5 * dt * k2;
    let k3 = f(x2);
    let x3 = x0 + dt * k3;
    let k4 = f(x3);

    let x = x0 + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite(x));
    }
    // RK4-consistent quadrature of the supply rate over the step.
    let supplied = state.supplied + dt * (w(x0) + 2.0 * w(x1) + 2.0 * w(x2) + w(x3)) / 6.0;

    Ok(AgentState {
        x,
        y: x,
        u_held: u,
        storage: 0.5 * x * x,
        supplied,
    })
}

/// One sampled point of the passivity trace.
#[derive(Debug, Clone, Copy)]
pub struct PassivityRecord {
    pub u: f64,
    pub y: f64,
    pub storage: f64,
    pub supplied: f64,
}

/// Worst-case violation of the dissipation inequality over a trace sampled
/// at fixed `dt`: max over steps of (dV - dW)/dt where W is the accumulated
/// supply integral. Nonpositive (up to integrator error) for an honest
/// passive plant; strictly positive when passivity is overstated.
pub fn passivity_residual(trace: &[PassivityRecord], dt: f64) -> f64 {
    trace
        .windows(2)
        .map(|w| ((w[1].storage - w[0].storage) - (w[1].supplied - w[0].supplied)) / dt)
        .fold(0.0, f64::max)
}
