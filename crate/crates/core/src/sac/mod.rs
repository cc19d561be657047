//! Discrete-action soft actor-critic: replay, twin critics with targets,
//! entropy-regularized policy updates and the training loop.

mod agent;
mod config;
mod policy;
mod replay;
mod trainer;

pub use agent::{
    critic_loss, critic_loss_graph, critic_q, policy_loss, policy_loss_graph, soft_value, td_targets, Agent, Batch, Critics,
    PolicyLossVars, UpdateStats,
};
pub use config::TrainerConfig;
pub use policy::{sample_categorical, ChainSettings, PolicyArch, PolicyNet, PolicyNoise};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{
    eval_episode_seed, evaluate, train, train_episode_seed, write_metrics_csv, EpochMetrics, EvalReport, GreedyPolicy,
    TrainOutcome, EVAL_SEED_BIT,
};

#[cfg(test)]
mod tests;
