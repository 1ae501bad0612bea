//! Event-triggered synchronization of output-passive multi-agent systems
//! under Byzantine attack: simulation, detection and mitigation.
//!
//! The crate is organized around a deterministic fixed-step simulation loop
//! ([`sim::run_scenario`]) wiring together:
//!
//! - [`graph`] — weighted digraphs, Laplacians, algebraic connectivity and
//!   the synchronization-measure machinery,
//! - [`dynamics`] — first-order output-passive plants with RK4 integration
//!   and passivity bookkeeping,
//! - [`trigger`] — event-trigger design and evaluation, diffusive control
//!   inputs, Zeno monitoring,
//! - [`attack`] — Byzantine weight manipulation and probabilistic data
//!   falsification, plus the sensing-channel model,
//! - [`detection`] — per-agent energy detection, closed-form transient
//!   detection/false-alarm probabilities, deflection and blinding analysis,
//! - [`learning`] — online method-of-moments and EM estimation of attack
//!   parameters, neighbor classification,
//! - [`mitigation`] — neighbor-assigned weight protocol, trigger retuning
//!   and data correction,
//! - [`scenario`] / [`sim`] / [`sweep`] — configuration, the simulation
//!   harness and the analytic parameter sweeps behind the CLI.

pub mod attack;
pub mod detection;
pub mod dynamics;
pub mod graph;
pub mod learning;
pub mod linalg;
pub mod mitigation;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod trigger;

/// Binary synchronization hypothesis: `H0` = synchronized, `H1` = not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    /// Index form used to key per-hypothesis tables (H0 -> 0, H1 -> 1).
    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Hypothesis {
        if i == 0 {
            Hypothesis::H0
        } else {
            Hypothesis::H1
        }
    }
}

/// Serialize a float with 17 significant digits so CSV output round-trips
/// losslessly and byte-identically across runs.
pub fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        // keep integers readable; still lossless
        format!("{:.1}", x)
    } else {
        format!("{:.16e}", x)
    }
}
