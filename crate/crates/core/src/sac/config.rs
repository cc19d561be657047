use serde::{Deserialize, Serialize};

use super::ChainSettings;
use crate::diffusion::SamplingVariance;
use crate::error::{Error, Result};

/// Soft actor-critic hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub alpha_entropy: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub batch: usize,
    /// Uniform-random environment steps before the first update.
    pub warmup_steps: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub updates_per_step: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub buffer_capacity: usize,
    /// Width of every hidden layer in policies and critics.
    pub hidden: usize,
    pub diffusion_steps: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub sampling_variance: SamplingVariance,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.005,
            alpha_entropy: 0.05,
            lr_policy: 1e-4,
            lr_critic: 1e-3,
            batch: 128,
            warmup_steps: 2000,
            epochs: 1000,
            steps_per_epoch: 1000,
            updates_per_step: 1,
            eval_episodes: 5,
            seed: 0,
            buffer_capacity: 100_000,
            hidden: 256,
            diffusion_steps: 5,
            beta_lo: 0.05,
            beta_hi: 0.5,
            sampling_variance: SamplingVariance::Beta,
        }
    }
}

impl TrainerConfig {
    pub fn chain(&self) -> ChainSettings {
        ChainSettings {
            steps: self.diffusion_steps,
            beta_lo: self.beta_lo,
            beta_hi: self.beta_hi,
            variance: self.sampling_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.alpha_entropy >= 0.0) {
            return bad(format!("alpha_entropy must be non-negative, got {}", self.alpha_entropy));
        }
        if !(self.lr_policy > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch == 0 || self.batch > self.buffer_capacity {
            return bad(format!(
                "batch must be in 1..={} (buffer capacity), got {}",
                self.buffer_capacity, self.batch
            ));
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be positive".into());
        }
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainerConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let cases: Vec<fn(&mut TrainerConfig)> = vec![
            |c| c.gamma = 1.0,
            |c| c.gamma = 0.0,
            |c| c.tau = 0.0,
            |c| c.tau = 1.5,
            |c| c.batch = 0,
            |c| c.batch = c.buffer_capacity + 1,
            |c| c.lr_policy = 0.0,
            |c| c.alpha_entropy = -1.0,
        ];
        for f in cases {
            let mut c = TrainerConfig::default();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
        let mut c = TrainerConfig::default();
        c.tau = 1.0;
        c.validate().unwrap();
    }
}
