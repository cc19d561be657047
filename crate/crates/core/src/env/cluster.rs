use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterConfig, Task};
use crate::error::{Error, Result};

/// Task category; index into the utility table columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskType(pub usize);

/// One deployed generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: usize,
    pub server_id: usize,
    /// Baseline utility per task type, each in `[0, 1]`.
    pub baseline_utility: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub server_id: usize,
    pub capacity: u32,
}

/// Static description of the edge cluster: server capacities and the
/// models deployed on them. Model `m` lives on server `m / models_per_server`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub models_per_server: usize,
    pub k_types: usize,
    pub servers: Vec<ServerSpec>,
    pub models: Vec<ModelProfile>,
}

/// Draws capacities uniformly from `capacity_range` and every baseline
/// utility uniformly from `[0, 1)`; fully determined by `seed`.
pub fn make_cluster(config: &ClusterConfig, seed: u64) -> Cluster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [clo, chi] = config.capacity_range;
    let servers = (0..config.n_servers)
        .map(|server_id| ServerSpec {
            server_id,
            capacity: rng.gen_range(clo..=chi),
        })
        .collect();
    let models = (0..config.n_models())
        .map(|model_id| ModelProfile {
            model_id,
            server_id: model_id / config.models_per_server,
            baseline_utility: (0..config.k_types).map(|_| rng.gen::<f64>()).collect(),
        })
        .collect();
    Cluster {
        models_per_server: config.models_per_server,
        k_types: config.k_types,
        servers,
        models,
    }
}

/// Utility of serving `task` with `profile`: `beta * U_bar[type] + kappa * demand`.
pub fn utility(profile: &ModelProfile, task: &Task, config: &ClusterConfig) -> f64 {
    config.beta_mix * profile.baseline_utility[task.ttype.0] + config.kappa * f64::from(task.demand)
}

impl Cluster {
    /// Builds a cluster from explicit capacities and a `[model][type]` table.
    pub fn from_parts(capacities: &[u32], models_per_server: usize, table: Vec<Vec<f64>>) -> Self {
        assert_eq!(table.len(), capacities.len() * models_per_server, "one table row per model");
        let k_types = table.first().map_or(0, Vec::len);
        Self {
            models_per_server,
            k_types,
            servers: capacities
                .iter()
                .enumerate()
                .map(|(server_id, &capacity)| ServerSpec { server_id, capacity })
                .collect(),
            models: table
                .into_iter()
                .enumerate()
                .map(|(model_id, baseline_utility)| ModelProfile {
                    model_id,
                    server_id: model_id / models_per_server,
                    baseline_utility,
                })
                .collect(),
        }
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn server_of(&self, model: usize) -> usize {
        self.models[model].server_id
    }

    pub fn capacity(&self, server: usize) -> u32 {
        self.servers[server].capacity
    }

    pub fn models_on(&self, server: usize) -> usize {
        self.models.iter().filter(|m| m.server_id == server).count()
    }

    /// Checks the cluster against the configuration it is used with.
    pub fn check_against(&self, config: &ClusterConfig) -> Result<()> {
        if self.servers.len() != config.n_servers
            || self.models.len() != config.n_models()
            || self.k_types != config.k_types
        {
            return Err(Error::InvalidConfig(format!(
                "cluster has {} servers / {} models / {} types, config expects {} / {} / {}",
                self.servers.len(),
                self.models.len(),
                self.k_types,
                config.n_servers,
                config.n_models(),
                config.k_types
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
