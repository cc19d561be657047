use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PolicyArch, PolicyNet, PolicyNoise, ReplayBuffer, TrainerConfig, Transition};
use crate::diffusion::policy_entropy;
use crate::error::Result;
use crate::nn::{adam_step, Activation, Graph, Matrix, Mlp, OptState, ParamSet, Var};

/// Twin Q-networks with their slowly tracking target copies. All four
/// share one layout.
#[derive(Debug, Clone)]
pub struct Critics {
    pub net: Mlp,
    pub q1: ParamSet,
    pub q2: ParamSet,
    pub q1_target: ParamSet,
    pub q2_target: ParamSet,
}

impl Critics {
    pub fn new(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let dims = [state_dim, hidden, hidden, action_dim];
        let mut q1 = ParamSet::new();
        let net = Mlp::new(&mut q1, "q", &dims, Activation::Identity, rng);
        let mut q2 = ParamSet::new();
        Mlp::new(&mut q2, "q", &dims, Activation::Identity, rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        Self {
            net,
            q1,
            q2,
            q1_target,
            q2_target,
        }
    }

    /// Q-values for every action, one row per state.
    pub fn q_values(&self, ps: &ParamSet, states: &Matrix) -> Matrix {
        let mut g = Graph::new();
        let s = g.input(states.clone());
        let q = self.net.forward(&mut g, ps, s);
        g.value(q).clone()
    }

    /// Elementwise minimum of the two target critics.
    pub fn min_target(&self, states: &Matrix) -> Matrix {
        elementwise_min(&self.q_values(&self.q1_target, states), &self.q_values(&self.q2_target, states))
    }

    pub fn min_online(&self, states: &Matrix) -> Matrix {
        elementwise_min(&self.q_values(&self.q1, states), &self.q_values(&self.q2, states))
    }

    /// `target <- tau * online + (1 - tau) * target` for both critics.
    pub fn soft_update(&mut self, tau: f64) {
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);
    }
}

fn elementwise_min(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.shape(), b.shape());
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.min(*y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

/// Action values of one state under one critic.
pub fn critic_q(net: &Mlp, ps: &ParamSet, state: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let s = g.input(Matrix::row_vector(state));
    let q = net.forward(&mut g, ps, s);
    g.value(q).as_slice().to_vec()
}

/// `sum_a pi(a) * min_q(a) + alpha * H(pi)`.
pub fn soft_value(probs: &[f64], min_q: &[f64], alpha: f64) -> f64 {
    assert_eq!(probs.len(), min_q.len());
    probs.iter().zip(min_q).map(|(p, q)| p * q).sum::<f64>() + alpha * policy_entropy(probs)
}

/// A sampled minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        assert!(!items.is_empty(), "empty batch");
        let rows = |f: fn(&Transition) -> &Vec<f64>| Matrix::from_rows(&items.iter().map(|t| f(t).clone()).collect::<Vec<_>>());
        Self {
            states: rows(|t| &t.state),
            actions: items.iter().map(|t| t.action).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: rows(|t| &t.next_state),
            dones: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Policy probabilities and entropies evaluated without recording gradients.
fn policy_probs(policy: &PolicyNet, ps: &ParamSet, states: &Matrix, noise: &PolicyNoise) -> Matrix {
    let mut g = Graph::new();
    let s = g.input(states.clone());
    let logits = policy.logits(&mut g, ps, s, noise);
    let p = g.softmax_rows(logits);
    g.value(p).clone()
}

/// TD targets `y = r + gamma * (1 - done) * V(s')`, with `V` the soft value
/// under the target critics and the current policy.
pub fn td_targets(
    critics: &Critics,
    policy: &PolicyNet,
    policy_ps: &ParamSet,
    batch: &Batch,
    config: &TrainerConfig,
    noise: &PolicyNoise,
) -> Vec<f64> {
    let probs = policy_probs(policy, policy_ps, &batch.next_states, noise);
    let min_q = critics.min_target(&batch.next_states);
    (0..batch.len())
        .map(|i| {
            let v = soft_value(probs.row(i), min_q.row(i), config.alpha_entropy);
            let cont = if batch.dones[i] { 0.0 } else { 1.0 };
            batch.rewards[i] + config.gamma * cont * v
        })
        .collect()
}

/// `mean_i (Q(s_i, a_i) - y_i)^2` on the tape; `y` enters as a constant.
pub fn critic_loss_graph<'a>(g: &mut Graph<'a>, net: &Mlp, ps: &'a ParamSet, batch: &Batch, y: &[f64]) -> Var {
    let s = g.input(batch.states.clone());
    let q = net.forward(g, ps, s);
    let qa = g.gather_cols(q, &batch.actions);
    let target = g.input(Matrix::from_vec(y.len(), 1, y.to_vec()));
    let diff = g.sub(qa, target);
    let sq = g.square(diff);
    g.mean(sq)
}

/// Losses of both online critics against shared targets.
pub fn critic_loss(
    critics: &Critics,
    policy: &PolicyNet,
    policy_ps: &ParamSet,
    batch: &Batch,
    config: &TrainerConfig,
    noise: &PolicyNoise,
) -> (f64, f64) {
    assert!(!batch.is_empty(), "critic loss of an empty batch");
    let y = td_targets(critics, policy, policy_ps, batch, config, noise);
    let eval = |ps: &ParamSet| {
        let mut g = Graph::new();
        let l = critic_loss_graph(&mut g, &critics.net, ps, batch, &y);
        g.value(l).get(0, 0)
    };
    (eval(&critics.q1), eval(&critics.q2))
}

/// Output of [`policy_loss_graph`].
#[derive(Debug, Clone, Copy)]
pub struct PolicyLossVars {
    pub loss: Var,
    pub probs: Var,
}

/// `-mean_i [ sum_a pi(a|s_i) min_q(s_i, a) + alpha * H(pi(.|s_i)) ]` with
/// `min_q` held constant.
pub fn policy_loss_graph<'a>(
    g: &mut Graph<'a>,
    policy: &PolicyNet,
    ps: &'a ParamSet,
    states: &Matrix,
    min_q: &Matrix,
    alpha: f64,
    noise: &PolicyNoise,
) -> PolicyLossVars {
    let s = g.input(states.clone());
    let logits = policy.logits(g, ps, s, noise);
    let probs = g.softmax_rows(logits);
    let logp = g.log_softmax_rows(logits);
    let q = g.input(min_q.clone());
    let value = g.mul(probs, q);
    let plogp = g.mul(probs, logp);
    let per_action = g.axpby(1.0, value, -alpha, plogp);
    let per_state = g.sum_cols(per_action);
    let mean = g.mean(per_state);
    let loss = g.scale(mean, -1.0);
    PolicyLossVars { loss, probs }
}

pub fn policy_loss(
    policy: &PolicyNet,
    policy_ps: &ParamSet,
    critics: &Critics,
    batch: &Batch,
    config: &TrainerConfig,
    noise: &PolicyNoise,
) -> f64 {
    assert!(!batch.is_empty(), "policy loss of an empty batch");
    let min_q = critics.min_online(&batch.states);
    let mut g = Graph::new();
    let v = policy_loss_graph(&mut g, policy, policy_ps, &batch.states, &min_q, config.alpha_entropy, noise);
    g.value(v.loss).get(0, 0)
}

/// Diagnostics of one [`Agent::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss_1: f64,
    pub critic_loss_2: f64,
    pub policy_loss: f64,
    pub mean_entropy: f64,
}

/// Policy, critics and optimizer state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: TrainerConfig,
    pub policy: PolicyNet,
    pub policy_params: ParamSet,
    pub critics: Critics,
    pub policy_opt: OptState,
    pub q1_opt: OptState,
    pub q2_opt: OptState,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(arch: PolicyArch, state_dim: usize, action_dim: usize, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let mut policy_params = ParamSet::new();
        let policy = PolicyNet::new(
            arch,
            state_dim,
            action_dim,
            config.chain(),
            config.hidden,
            &mut policy_params,
            &mut init,
        )?;
        let critics = Critics::new(state_dim, action_dim, config.hidden, &mut init);
        Ok(Self {
            policy_opt: OptState::new(&policy_params, config.lr_policy),
            q1_opt: OptState::new(&critics.q1, config.lr_critic),
            q2_opt: OptState::new(&critics.q2, config.lr_critic),
            config: config.clone(),
            policy,
            policy_params,
            critics,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_a11),
        })
    }

    /// Critic step, then policy step against the updated critics, then the
    /// target interpolation. `None` if the buffer holds fewer than `batch`
    /// transitions.
    pub fn update(&mut self, buffer: &mut ReplayBuffer) -> Option<UpdateStats> {
        let cfg = &self.config;
        if buffer.len() < cfg.batch {
            return None;
        }
        let idx = buffer.sample_indices(cfg.batch);
        let items: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
        let batch = Batch::from_transitions(&items);
        Some(self.update_on(&batch))
    }

    /// One update on a given batch.
    pub fn update_on(&mut self, batch: &Batch) -> UpdateStats {
        let target_noise = self.policy.draw_noise(&mut self.rng, batch.len());
        let y = td_targets(&self.critics, &self.policy, &self.policy_params, batch, &self.config, &target_noise);

        let mut critic_losses = [0.0; 2];
        for (k, (ps, opt)) in [
            (&mut self.critics.q1, &mut self.q1_opt),
            (&mut self.critics.q2, &mut self.q2_opt),
        ]
        .into_iter()
        .enumerate()
        {
            let grads = {
                let mut g = Graph::new();
                let l = critic_loss_graph(&mut g, &self.critics.net, ps, batch, &y);
                critic_losses[k] = g.value(l).get(0, 0);
                g.backward(l)
            };
            grads.accumulate_into(ps);
            adam_step(ps, opt);
        }

        let min_q = self.critics.min_online(&batch.states);
        let noise = self.policy.draw_noise(&mut self.rng, batch.len());
        let (policy_loss, mean_entropy, grads) = {
            let mut g = Graph::new();
            let v = policy_loss_graph(
                &mut g,
                &self.policy,
                &self.policy_params,
                &batch.states,
                &min_q,
                self.config.alpha_entropy,
                &noise,
            );
            let probs = g.value(v.probs);
            let ent = (0..probs.rows()).map(|r| policy_entropy(probs.row(r))).sum::<f64>() / probs.rows() as f64;
            (g.value(v.loss).get(0, 0), ent, g.backward(v.loss))
        };
        grads.accumulate_into(&mut self.policy_params);
        adam_step(&mut self.policy_params, &mut self.policy_opt);

        self.critics.soft_update(self.config.tau);
        UpdateStats {
            critic_loss_1: critic_losses[0],
            critic_loss_2: critic_losses[1],
            policy_loss,
            mean_entropy,
        }
    }
}
