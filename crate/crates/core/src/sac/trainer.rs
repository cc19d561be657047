use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_categorical, Agent, PolicyArch, PolicyNet, ReplayBuffer, TrainerConfig, Transition, UpdateStats};
use crate::baselines::Policy;
use crate::diffusion::argmax;
use crate::env::{EdgeEnv, MetricsAccumulator};
use crate::error::Result;
use crate::nn::ParamSet;

/// Evaluation episodes use seeds with this bit set; training seeds never do.
pub const EVAL_SEED_BIT: u64 = 1 << 63;

/// Seed of the `k`-th training episode of a run.
pub fn train_episode_seed(run_seed: u64, k: u64) -> u64 {
    ((run_seed << 32) ^ k) & !EVAL_SEED_BIT
}

/// Seed of the `i`-th evaluation episode starting at `base`.
pub fn eval_episode_seed(base: u64, i: u64) -> u64 {
    EVAL_SEED_BIT | base.wrapping_add(i)
}

/// One row of the per-epoch metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub env_steps: u64,
    /// Mean reward of training episodes finished during this epoch; carried
    /// over from the last epoch that finished one, NaN before the first.
    pub train_reward_mean: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_std: f64,
    pub crash_rate: f64,
    pub lost_utility: f64,
    pub policy_loss: f64,
    pub critic_loss_1: f64,
    pub critic_loss_2: f64,
    pub mean_entropy: f64,
}

/// Aggregate over evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub reward_mean: f64,
    /// Sample standard deviation (0 for a single episode).
    pub reward_std: f64,
    /// Mean over episodes of each episode's crash rate.
    pub crash_rate: f64,
    /// Mean over episodes of lost utility.
    pub lost_utility: f64,
    pub episodes: Vec<MetricsAccumulator>,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<MetricsAccumulator>) -> Self {
        let n = episodes.len().max(1) as f64;
        let rewards: Vec<f64> = episodes.iter().map(|m| m.cumulative_reward).collect();
        let reward_mean = rewards.iter().sum::<f64>() / n;
        let reward_std = if rewards.len() > 1 {
            (rewards.iter().map(|r| (r - reward_mean).powi(2)).sum::<f64>() / (rewards.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            reward_mean,
            reward_std,
            crash_rate: episodes.iter().map(|m| m.crash_rate()).sum::<f64>() / n,
            lost_utility: episodes.iter().map(|m| m.lost_utility).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Runs `n_episodes` full episodes of `policy` on copies of `env`, on
/// evaluation seeds starting at `seed_base`.
pub fn evaluate(policy: &mut dyn Policy, env: &EdgeEnv, n_episodes: usize, seed_base: u64) -> EvalReport {
    let mut env = env.clone();
    let episodes = (0..n_episodes as u64)
        .map(|i| {
            let seed = eval_episode_seed(seed_base, i);
            let mut state = env.reset(seed);
            policy.reset(seed);
            while !env.is_done() {
                let a = policy.act(&env, &state);
                state = env.step(a).next_state;
            }
            env.metrics().clone()
        })
        .collect();
    EvalReport::from_episodes(episodes)
}

/// Greedy (argmax) actor over a learned policy. Diffusion noise is drawn
/// from a generator reseeded at every episode.
#[derive(Debug)]
pub struct GreedyPolicy<'a> {
    pub net: &'a PolicyNet,
    pub params: &'a ParamSet,
    rng: ChaCha8Rng,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(net: &'a PolicyNet, params: &'a ParamSet) -> Self {
        Self {
            net,
            params,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x9e37_79b9);
    }

    fn act(&mut self, _env: &EdgeEnv, state: &[f64]) -> usize {
        argmax(&self.net.distribution(self.params, state, &mut self.rng).probs)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<EpochMetrics>,
}

fn mean_or_nan(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Off-policy training loop. `on_epoch` sees every metrics row as soon as it
/// is recorded.
pub fn train(
    env: &EdgeEnv,
    arch: PolicyArch,
    config: &TrainerConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut agent = Agent::new(arch, env.state_dim(), env.n_actions(), config)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.seed ^ 0xb0ff);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xac7);
    let eval_env = env.clone();
    let mut env = env.clone();

    let mut episode = 0u64;
    let mut state = env.reset(train_episode_seed(config.seed, episode));
    let mut episode_reward = 0.0;
    let mut total_steps = 0u64;
    let mut last_train_reward = f64::NAN;
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut finished = Vec::new();
        let mut stats: Vec<UpdateStats> = Vec::new();
        for _ in 0..config.steps_per_epoch {
            let action = if total_steps < config.warmup_steps {
                rng.gen_range(0..env.n_actions())
            } else {
                let out = agent.policy.distribution(&agent.policy_params, &state, &mut rng);
                sample_categorical(&out.probs, &mut rng)
            };
            let out = env.step(action);
            episode_reward += out.reward;
            total_steps += 1;
            buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.done,
            });
            state = out.next_state;
            if total_steps >= config.warmup_steps {
                for _ in 0..config.updates_per_step {
                    if let Some(s) = agent.update(&mut buffer) {
                        stats.push(s);
                    }
                }
            }
            if out.done {
                finished.push(episode_reward);
                episode_reward = 0.0;
                episode += 1;
                state = env.reset(train_episode_seed(config.seed, episode));
            }
        }
        if !finished.is_empty() {
            last_train_reward = mean_or_nan(&finished);
        }
        let report = {
            let mut greedy = GreedyPolicy::new(&agent.policy, &agent.policy_params);
            evaluate(&mut greedy, &eval_env, config.eval_episodes, 0)
        };
        let pick = |f: fn(&UpdateStats) -> f64| mean_or_nan(&stats.iter().map(f).collect::<Vec<_>>());
        let row = EpochMetrics {
            epoch,
            env_steps: total_steps,
            train_reward_mean: last_train_reward,
            eval_reward_mean: report.reward_mean,
            eval_reward_std: report.reward_std,
            crash_rate: report.crash_rate,
            lost_utility: report.lost_utility,
            policy_loss: pick(|s| s.policy_loss),
            critic_loss_1: pick(|s| s.critic_loss_1),
            critic_loss_2: pick(|s| s.critic_loss_2),
            mean_entropy: pick(|s| s.mean_entropy),
        };
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome { agent, metrics })
}

/// Writes metrics rows as CSV with a header.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[EpochMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "epoch",
            "env_steps",
            "train_reward_mean",
            "eval_reward_mean",
            "eval_reward_std",
            "crash_rate",
            "lost_utility",
            "policy_loss",
            "critic_loss_1",
            "critic_loss_2",
            "mean_entropy",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
