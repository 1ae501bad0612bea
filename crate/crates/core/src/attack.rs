//! Byzantine behavior and the sensing channel: hypothesis-keyed data
//! falsification, control-gain manipulation, additive-Gaussian link model,
//! and the seeded substream machinery that keeps runs reproducible.

use crate::graph::WeightedDigraph;
use crate::Hypothesis;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Who writes the control gains: each agent its own in-gains (the baseline)
/// or each sender the gains of its out-neighbors (the hardened protocol).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    SelfDesigned,
    NeighborAssigned,
}

/// Attack parameters for one agent. Honest agents simply have no profile
/// (equivalently delta = p = omega = 0).
///
/// `targets` optionally restricts the weight manipulation to the named
/// out-neighbors (the gains this agent writes); when absent, omega applies
/// to the full edge set implied by the weight mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ByzantineProfile {
    pub agent_id: usize,
    #[serde(rename = "Delta")]
    pub delta_attack: f64,
    #[serde(rename = "P")]
    pub p_attack: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
}

impl ByzantineProfile {
    pub fn honest(agent_id: usize) -> Self {
        ByzantineProfile {
            agent_id,
            delta_attack: 0.0,
            p_attack: 0.0,
            omega: 0.0,
            t_start: 0.0,
            targets: None,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_start
    }
}

/// Per-link sensing model: received = h * sent + n, n ~ N(0, sigma2).
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel {
    pub h: f64,
    pub sigma2: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { h: 1.0, sigma2: 1.0 }
    }
}

/// Purpose tag for substream derivation.
#[derive(Debug, Clone, Copy)]
pub enum StreamPurpose {
    /// Sensing noise on the link a -> b.
    Noise,
    /// Falsification coin of agent a.
    Attack,
    /// Control-path noise on the link a -> b (only with noisy_control).
    ControlNoise,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Noise => 0x6e6f_6973,
            StreamPurpose::Attack => 0x6174_746b,
            StreamPurpose::ControlNoise => 0x636e_6f69,
        }
    }
}

/// Master seed from which all substreams are derived by counter-based
/// mixing. Identical seed + config gives bit-identical simulations no
/// matter how the independent streams are consumed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    master: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams { master }
    }

    /// Independent substream keyed by (purpose, a, b).
    pub fn stream(&self, purpose: StreamPurpose, a: u64, b: u64) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        let mut state = splitmix64(self.master ^ splitmix64(purpose.tag()));
        state = splitmix64(state ^ splitmix64(a.wrapping_add(0x517c_c1b7_2722_0a95)));
        state = splitmix64(state ^ splitmix64(b.wrapping_add(0x2545_f491_4f6c_dd1d)));
        for chunk in seed.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}

/// Hypothesis-keyed falsification: with probability P the broadcast is
/// shifted by +Delta when the system is synchronized (vandalism) and by
/// -Delta when it is not (exploitation); otherwise, and for inactive or
/// honest profiles, the true output passes through.
pub fn falsify<R: Rng>(
    y_true: f64,
    profile: &ByzantineProfile,
    hypothesis: Hypothesis,
    t: f64,
    rng: &mut R,
) -> f64 {
    if !profile.is_active(t) || profile.p_attack <= 0.0 {
        return y_true;
    }
    let coin: f64 = rng.gen();
    if coin < profile.p_attack {
        match hypothesis {
            Hypothesis::H0 => y_true + profile.delta_attack,
            Hypothesis::H1 => y_true - profile.delta_attack,
        }
    } else {
        y_true
    }
}

/// Apply the profiles' weight manipulations and return the attacked graph.
///
/// With explicit `targets`, omega inflates exactly the gains the Byzantine
/// agent writes toward those out-neighbors. Otherwise the edge set follows
/// the mode: under `SelfDesigned` the agent inflates all of its own
/// in-gains; under `NeighborAssigned` all gains it assigns downstream.
pub fn manipulate_weights(
    g: &WeightedDigraph,
    profiles: &[ByzantineProfile],
    mode: WeightMode,
) -> WeightedDigraph {
    let n = g.n();
    let mut w = g.weights().clone();
    for p in profiles {
        if p.omega == 0.0 {
            continue;
        }
        let j = p.agent_id;
        match &p.targets {
            Some(targets) => {
                for &k in targets {
                    if k < n && w[j][k] != 0.0 {
                        w[j][k] += p.omega;
                    }
                }
            }
            None => match mode {
                WeightMode::SelfDesigned => {
                    for k in 0..n {
                        if w[k][j] != 0.0 {
                            w[k][j] += p.omega;
                        }
                    }
                }
                WeightMode::NeighborAssigned => {
                    for k in 0..n {
                        if w[j][k] != 0.0 {
                            w[j][k] += p.omega;
                        }
                    }
                }
            },
        }
    }
    WeightedDigraph::from_weights(w).expect("omega >= 0 keeps the graph valid")
}

/// One sensed sample of a transmitted value over a noisy link.
pub fn sense<R: Rng>(y_sent: f64, ch: &ChannelModel, rng: &mut R) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    ch.h * y_sent + ch.sigma2.sqrt() * n
}
