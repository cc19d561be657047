use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step sampling standard deviation used by the reverse chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingVariance {
    /// `sigma_t = sqrt(beta_t)`.
    #[default]
    Beta,
    /// `sigma_t = sqrt(beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t))`.
    Posterior,
}

/// Precomputed quantities of a `T`-step reverse chain. Timesteps are
/// 1-based: `beta(1)` is the first (least noisy) step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `alpha_bar(0)` is 1 by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    /// Coefficients `(c_x, c_eps)` with `mean = c_x * x_t - c_eps * eps_hat`.
    pub fn mean_coefficients(&self, t: usize) -> (f64, f64) {
        let sa = self.alpha(t).sqrt();
        (1.0 / sa, (1.0 - self.alpha(t)) / (1.0 - self.alpha_bar(t)).sqrt() / sa)
    }

    /// Variance of `x_0` when the noise predictor is identically zero:
    /// `V_{t-1} = V_t / alpha_t + sigma_t^2`, `V_T = 1`.
    pub fn zero_predictor_variance(&self) -> f64 {
        (1..=self.steps())
            .rev()
            .fold(1.0, |v, t| v / self.alpha(t) + self.sigma(t).powi(2))
    }
}

/// Linear `beta` from `beta_lo` (t = 1) to `beta_hi` (t = T).
pub fn build_schedule(steps: usize, beta_lo: f64, beta_hi: f64, variance: SamplingVariance) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidConfig("diffusion needs at least one step".into()));
    }
    if !(beta_lo > 0.0 && beta_lo <= beta_hi && beta_hi < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "beta range must satisfy 0 < lo <= hi < 1, got [{beta_lo}, {beta_hi}]"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_lo
            } else {
                beta_lo + (beta_hi - beta_lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    let sigma = (0..steps)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                match variance {
                    SamplingVariance::Beta => beta[i].sqrt(),
                    SamplingVariance::Posterior => (beta[i] * (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i])).sqrt(),
                }
            }
        })
        .collect();
    Ok(NoiseSchedule {
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

/// One reverse step:
/// `x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z`.
pub fn denoise_step(x_t: &[f64], t: usize, eps_hat: &[f64], sched: &NoiseSchedule, z: &[f64]) -> Vec<f64> {
    assert!((1..=sched.steps()).contains(&t), "timestep {t} out of range");
    assert_eq!(x_t.len(), eps_hat.len());
    let (cx, ce) = sched.mean_coefficients(t);
    let sigma = sched.sigma(t);
    x_t.iter()
        .zip(eps_hat)
        .enumerate()
        .map(|(i, (x, e))| {
            let noise = if sigma == 0.0 { 0.0 } else { sigma * z[i] };
            cx * x - ce * e + noise
        })
        .collect()
}
