//! Heuristic schedulers and the tags that select any policy, learned or not.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::PredictorArch;
use crate::env::EdgeEnv;
use crate::error::{Error, Result};
use crate::sac::{Agent, PolicyArch, TrainerConfig};

/// Anything that picks an action for the pending task.
pub trait Policy {
    /// Called at the start of every episode.
    fn reset(&mut self, _episode_seed: u64) {}

    fn act(&mut self, env: &EdgeEnv, state: &[f64]) -> usize;
}

/// Uniform action, ignoring the state.
pub fn random_policy(n_actions: usize, rng: &mut impl Rng) -> usize {
    rng.gen_range(0..n_actions)
}

/// Returns `(cursor, cursor + 1 mod n_actions)`.
pub fn round_robin_policy(cursor: usize, n_actions: usize) -> (usize, usize) {
    assert!(cursor < n_actions, "cursor {cursor} out of range");
    (cursor, (cursor + 1) % n_actions)
}

/// Lowest model on the feasible server with the largest free fraction;
/// with no feasible server, lowest model on the server with the most free
/// capacity. Utilities are never consulted.
pub fn crash_avoid_policy(env: &EdgeEnv) -> usize {
    let feasible = env.feasible_actions();
    let cluster = env.cluster();
    let servers = env.servers();
    let mut best: Option<(usize, f64)> = None;
    for (m, ok) in feasible.iter().enumerate() {
        if !ok {
            continue;
        }
        let frac = servers[cluster.server_of(m)].remaining_fraction();
        if best.map_or(true, |(_, f)| frac > f) {
            best = Some((m, frac));
        }
    }
    if let Some((m, _)) = best {
        return m;
    }
    let mut best = (0, i64::MIN);
    for m in 0..feasible.len() {
        let s = &servers[cluster.server_of(m)];
        let slack = i64::from(s.capacity) - i64::from(s.load());
        if slack > best.1 {
            best = (m, slack);
        }
    }
    best.0
}

/// Feasible model with the highest true utility for the pending task
/// (lowest id on ties); falls back to [`crash_avoid_policy`].
pub fn prophet_policy(env: &EdgeEnv) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (m, ok) in env.feasible_actions().iter().enumerate() {
        if !ok {
            continue;
        }
        let u = env.utility_of(m);
        if best.map_or(true, |(_, b)| u > b) {
            best = Some((m, u));
        }
    }
    match best {
        Some((m, _)) => m,
        None => crash_avoid_policy(env),
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ episode_seed);
    }

    fn act(&mut self, env: &EdgeEnv, _state: &[f64]) -> usize {
        random_policy(env.n_actions(), &mut self.rng)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    pub cursor: usize,
}

impl Policy for RoundRobin {
    fn reset(&mut self, _episode_seed: u64) {
        self.cursor = 0;
    }

    fn act(&mut self, env: &EdgeEnv, _state: &[f64]) -> usize {
        let (a, next) = round_robin_policy(self.cursor, env.n_actions());
        self.cursor = next;
        a
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrashAvoid;

impl Policy for CrashAvoid {
    fn act(&mut self, env: &EdgeEnv, _state: &[f64]) -> usize {
        crash_avoid_policy(env)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Prophet;

impl Policy for Prophet {
    fn act(&mut self, env: &EdgeEnv, _state: &[f64]) -> usize {
        prophet_policy(env)
    }
}

/// Every policy selectable by tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    RoundRobin,
    CrashAvoid,
    Prophet,
    SacMlp,
    Dsac,
    Adsac,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        Self::Random,
        Self::RoundRobin,
        Self::CrashAvoid,
        Self::Prophet,
        Self::SacMlp,
        Self::Dsac,
        Self::Adsac,
    ];

    pub const HEURISTICS: [PolicyKind; 4] = [Self::Random, Self::RoundRobin, Self::CrashAvoid, Self::Prophet];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::RoundRobin => "round_robin",
            Self::CrashAvoid => "crash_avoid",
            Self::Prophet => "prophet",
            Self::SacMlp => "sac_mlp",
            Self::Dsac => "dsac",
            Self::Adsac => "adsac",
        }
    }

    /// Network architecture of a learned policy, `None` for heuristics.
    pub fn arch(self) -> Option<PolicyArch> {
        match self {
            Self::SacMlp => Some(PolicyArch::Mlp),
            Self::Dsac => Some(PolicyArch::Diffusion(PredictorArch::Mlp)),
            Self::Adsac => Some(PolicyArch::Diffusion(PredictorArch::Attention)),
            _ => None,
        }
    }

    pub fn is_learned(self) -> bool {
        self.arch().is_some()
    }

    /// A fresh heuristic policy; `None` for learned kinds.
    pub fn heuristic(self, seed: u64) -> Option<Box<dyn Policy>> {
        let p: Box<dyn Policy> = match self {
            Self::Random => Box::new(RandomPolicy::new(seed)),
            Self::RoundRobin => Box::new(RoundRobin::default()),
            Self::CrashAvoid => Box::new(CrashAvoid),
            Self::Prophet => Box::new(Prophet),
            _ => return None,
        };
        Some(p)
    }

    /// Untrained agent for a learned kind.
    pub fn agent(self, state_dim: usize, action_dim: usize, config: &TrainerConfig) -> Result<Agent> {
        let arch = self
            .arch()
            .ok_or_else(|| Error::InvalidConfig(format!("{} is not a learned policy", self.tag())))?;
        Agent::new(arch, state_dim, action_dim, config)
    }

    pub fn valid_tags() -> String {
        Self::ALL.iter().map(|k| k.tag()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::UnknownPolicy {
                tag: s.to_owned(),
                valid: Self::valid_tags(),
            })
    }
}
