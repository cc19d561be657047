use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    build_schedule, chain_logits, ChainNoise, NoisePredictor, NoiseSchedule, PolicyOutput, PredictorArch, PredictorConfig,
    SamplingVariance,
};
use crate::error::Result;
use crate::nn::{Activation, Graph, Matrix, Mlp, ParamSet, Var};

/// Architecture of a trainable policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArch {
    /// State to logits with a plain MLP.
    Mlp,
    /// Reverse diffusion chain with the given noise predictor.
    Diffusion(PredictorArch),
}

/// Settings of the diffusion chain shared by all diffusion policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub steps: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub variance: SamplingVariance,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            steps: 5,
            beta_lo: 0.05,
            beta_hi: 0.5,
            variance: SamplingVariance::Beta,
        }
    }
}

#[derive(Debug, Clone)]
enum Body {
    Mlp(Mlp),
    Diffusion { predictor: NoisePredictor, schedule: NoiseSchedule },
}

/// Network layout of a policy; weights live in a separate [`ParamSet`].
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    pub state_dim: usize,
    pub action_dim: usize,
    body: Body,
}

/// Noise for one batched policy evaluation (empty for the MLP policy).
#[derive(Debug, Clone)]
pub struct PolicyNoise(Option<ChainNoise>);

impl PolicyNet {
    pub fn new(
        arch: PolicyArch,
        state_dim: usize,
        action_dim: usize,
        chain: ChainSettings,
        hidden: usize,
        ps: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let body = match arch {
            PolicyArch::Mlp => Body::Mlp(Mlp::new(
                ps,
                "pi",
                &[state_dim, hidden, hidden, action_dim],
                Activation::Identity,
                rng,
            )),
            PolicyArch::Diffusion(pa) => {
                let schedule = build_schedule(chain.steps, chain.beta_lo, chain.beta_hi, chain.variance)?;
                let mut cfg = PredictorConfig::new(pa, state_dim, action_dim);
                cfg.hidden = hidden;
                Body::Diffusion {
                    predictor: NoisePredictor::new(cfg, ps, rng),
                    schedule,
                }
            }
        };
        Ok(Self {
            arch,
            state_dim,
            action_dim,
            body,
        })
    }

    pub fn schedule(&self) -> Option<&NoiseSchedule> {
        match &self.body {
            Body::Diffusion { schedule, .. } => Some(schedule),
            Body::Mlp(_) => None,
        }
    }

    pub fn draw_noise(&self, rng: &mut impl Rng, batch: usize) -> PolicyNoise {
        match &self.body {
            Body::Mlp(_) => PolicyNoise(None),
            Body::Diffusion { schedule, .. } => PolicyNoise(Some(ChainNoise::draw(rng, batch, self.action_dim, schedule.steps()))),
        }
    }

    /// Action logits (`B x action_dim`) on the tape.
    pub fn logits<'a>(&self, g: &mut Graph<'a>, ps: &'a ParamSet, states: Var, noise: &PolicyNoise) -> Var {
        match (&self.body, &noise.0) {
            (Body::Mlp(net), _) => net.forward(g, ps, states),
            (Body::Diffusion { predictor, schedule }, Some(n)) => chain_logits(g, predictor, ps, schedule, states, n),
            (Body::Diffusion { .. }, None) => panic!("diffusion policy evaluated without chain noise"),
        }
    }

    /// Action distributions for a batch of states.
    pub fn distributions(&self, ps: &ParamSet, states: &Matrix, rng: &mut impl Rng) -> Vec<PolicyOutput> {
        let noise = self.draw_noise(rng, states.rows());
        let mut g = Graph::new();
        let s = g.input(states.clone());
        let x0 = self.logits(&mut g, ps, s, &noise);
        let x0 = g.value(x0);
        (0..x0.rows()).map(|r| PolicyOutput::from_logits(x0.row(r).to_vec())).collect()
    }

    pub fn distribution(&self, ps: &ParamSet, state: &[f64], rng: &mut impl Rng) -> PolicyOutput {
        self.distributions(ps, &Matrix::row_vector(state), rng).pop().expect("one row")
    }
}

/// Index drawn from the categorical distribution `probs`.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}
