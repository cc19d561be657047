use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NoisePredictor, NoiseSchedule};
use crate::nn::{ops::softmax, Graph, Matrix, ParamSet, Var};

/// Noise consumed by one batched run of the reverse chain: the starting
/// point `x_T` and one draw `z_t` per step `t = T..=2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNoise {
    pub x_start: Matrix,
    /// `z[t - 2]` is used at timestep `t`.
    pub z: Vec<Matrix>,
}

impl ChainNoise {
    pub fn draw(rng: &mut impl Rng, batch: usize, action_dim: usize, steps: usize) -> Self {
        let mut normal = |rows, cols| {
            let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let x_start = normal(batch, action_dim);
        let z = (2..=steps).rev().map(|_| normal(batch, action_dim)).collect::<Vec<_>>();
        // stored so that index t - 2 addresses step t
        let z = z.into_iter().rev().collect();
        Self { x_start, z }
    }

    pub fn zeros(batch: usize, action_dim: usize, steps: usize) -> Self {
        Self {
            x_start: Matrix::zeros(batch, action_dim),
            z: (2..=steps).map(|_| Matrix::zeros(batch, action_dim)).collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.x_start.rows()
    }
}

/// Sampled action distribution for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub x0: Vec<f64>,
    pub probs: Vec<f64>,
    pub entropy: f64,
}

impl PolicyOutput {
    pub fn from_logits(x0: Vec<f64>) -> Self {
        let probs = softmax(&x0);
        let entropy = policy_entropy(&probs);
        Self { x0, probs, entropy }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn policy_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Runs the full reverse chain on the tape and returns the denoised
/// logits `x_0` (`B x action_dim`). The noise is treated as constant, so
/// gradients flow to the predictor weights through every step.
pub fn chain_logits<'a>(
    g: &mut Graph<'a>,
    predictor: &NoisePredictor,
    ps: &'a ParamSet,
    sched: &NoiseSchedule,
    states: Var,
    noise: &ChainNoise,
) -> Var {
    let steps = sched.steps();
    assert_eq!(noise.z.len(), steps - 1, "noise drawn for a different chain length");
    let ctx = predictor.encode_state(g, ps, states);
    let mut x = g.input(noise.x_start.clone());
    for t in (1..=steps).rev() {
        let eps = predictor.predict(g, ps, x, t, &ctx);
        let (cx, ce) = sched.mean_coefficients(t);
        x = g.axpby(cx, x, -ce, eps);
        if t > 1 {
            let sigma = sched.sigma(t);
            x = g.add_const(x, &noise.z[t - 2].map(|v| sigma * v));
        }
    }
    x
}

/// Draws one action distribution for `state`.
pub fn sample_policy(
    predictor: &NoisePredictor,
    ps: &ParamSet,
    sched: &NoiseSchedule,
    state: &[f64],
    rng: &mut impl Rng,
) -> PolicyOutput {
    let noise = ChainNoise::draw(rng, 1, predictor.config.action_dim, sched.steps());
    let mut g = Graph::new();
    let s = g.input(Matrix::row_vector(state));
    let x0 = chain_logits(&mut g, predictor, ps, sched, s, &noise);
    PolicyOutput::from_logits(g.value(x0).as_slice().to_vec())
}

/// Batched variant of [`sample_policy`]; one row of `states` per output.
pub fn sample_policy_batch(
    predictor: &NoisePredictor,
    ps: &ParamSet,
    sched: &NoiseSchedule,
    states: &Matrix,
    rng: &mut impl Rng,
) -> Vec<PolicyOutput> {
    let noise = ChainNoise::draw(rng, states.rows(), predictor.config.action_dim, sched.steps());
    let mut g = Graph::new();
    let s = g.input(states.clone());
    let x0 = chain_logits(&mut g, predictor, ps, sched, s, &noise);
    let x0 = g.value(x0);
    (0..x0.rows()).map(|r| PolicyOutput::from_logits(x0.row(r).to_vec())).collect()
}
