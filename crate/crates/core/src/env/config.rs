use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the simulated edge cluster and of its task stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_servers: usize,
    pub models_per_server: usize,
    pub k_types: usize,
    /// Inclusive range of denoising steps a task requests.
    pub demand_range: [u32; 2],
    /// Inclusive range of per-server capacities, in denoising steps.
    pub capacity_range: [u32; 2],
    /// Poisson arrival rate per time unit.
    pub lambda: f64,
    /// Episode length in time units.
    pub horizon: f64,
    /// Weight of the per-(model, type) baseline utility.
    pub beta_mix: f64,
    /// Utility per requested denoising step.
    pub kappa: f64,
    /// Fixed crash penalty.
    pub penalty_p: f64,
    /// Time units of service per denoising step.
    pub duration_per_step: f64,
    /// Maximum number of arrivals per episode; 0 means unlimited.
    pub task_budget: u64,
    /// Seed used to draw capacities and the utility table.
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_servers: 5,
            models_per_server: 4,
            k_types: 4,
            demand_range: [100, 250],
            capacity_range: [1500, 3000],
            lambda: 0.0015,
            horizon: 1e6,
            beta_mix: 1.0,
            kappa: 0.002,
            penalty_p: 1.0,
            duration_per_step: 150.0,
            task_budget: 0,
            seed: 42,
        }
    }
}

impl ClusterConfig {
    pub fn n_models(&self) -> usize {
        self.n_servers * self.models_per_server
    }

    /// Length of the encoded observation vector.
    pub fn state_dim(&self) -> usize {
        self.k_types + 2 + 3 * self.n_servers
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.n_servers == 0 || self.models_per_server == 0 || self.k_types == 0 {
            return bad("n_servers, models_per_server and k_types must be at least 1".into());
        }
        let [dlo, dhi] = self.demand_range;
        if dlo == 0 || dlo > dhi {
            return bad(format!("demand_range {:?} is empty or starts at 0", self.demand_range));
        }
        let [clo, chi] = self.capacity_range;
        if clo == 0 || clo > chi {
            return bad(format!("capacity_range {:?} is empty or starts at 0", self.capacity_range));
        }
        if !(self.duration_per_step > 0.0) {
            return bad(format!(
                "duration_per_step must be positive, got {}",
                self.duration_per_step
            ));
        }
        if self.penalty_p < 0.0 || !self.kappa.is_finite() || !self.beta_mix.is_finite() {
            return bad("penalty_p must be non-negative and kappa/beta_mix finite".into());
        }
        Ok(())
    }
}
