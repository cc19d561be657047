//! Flat key-value run configuration.
//!
//! Keys are the field names of [`ClusterConfig`] and [`TrainerConfig`] plus
//! `policy`. Both structs carry a `seed`; the flat `seed` key is the run
//! seed, and the cluster layout seed is spelled `cluster_seed`.
//!
//! Sources are layered: defaults, then the file, then `ADSAC_<KEY>`
//! environment variables, then explicit overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::baselines::PolicyKind;
use crate::env::ClusterConfig;
use crate::error::{Error, Result};
use crate::sac::TrainerConfig;

pub const ENV_PREFIX: &str = "ADSAC_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub cluster: ClusterConfig,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Adsac,
            cluster: ClusterConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

fn table_of<T: Serialize>(value: &T) -> Table {
    Table::try_from(value).expect("config structs serialize to tables")
}

/// Every accepted key, in output order.
pub fn known_keys() -> Vec<String> {
    let mut keys = vec!["policy".to_owned(), "seed".to_owned(), "cluster_seed".to_owned()];
    for k in table_of(&ClusterConfig::default()).keys().chain(table_of(&TrainerConfig::default()).keys()) {
        if k != "seed" && !keys.contains(k) {
            keys.push(k.clone());
        }
    }
    keys
}

/// Parses a single value the way it would appear on the right of `=` in the
/// file; bare words fall back to strings.
pub fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.trim().to_owned()),
    }
}

impl RunConfig {
    /// Flat view of the configuration.
    pub fn to_table(&self) -> Table {
        let cluster = table_of(&self.cluster);
        let trainer = table_of(&self.trainer);
        let mut out = Table::new();
        for key in known_keys() {
            let v = match key.as_str() {
                "policy" => Value::String(self.policy.tag().to_owned()),
                "seed" => trainer["seed"].clone(),
                "cluster_seed" => cluster["seed"].clone(),
                k => cluster.get(k).or_else(|| trainer.get(k)).expect("known key").clone(),
            };
            out.insert(key, v);
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("flat table serializes")
    }

    /// Applies flat key-value pairs on top of `self`.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, Value)>) -> Result<Self> {
        let mut cluster = table_of(&self.cluster);
        let mut trainer = table_of(&self.trainer);
        let mut policy = self.policy;
        for (key, value) in pairs {
            match key {
                "policy" => {
                    let tag = value
                        .as_str()
                        .ok_or_else(|| Error::InvalidConfig(format!("policy must be a string, got {value}")))?;
                    policy = tag.parse()?;
                }
                "seed" => {
                    trainer.insert("seed".into(), value);
                }
                "cluster_seed" => {
                    cluster.insert("seed".into(), value);
                }
                k if cluster.contains_key(k) => {
                    cluster.insert(k.into(), value);
                }
                k if trainer.contains_key(k) => {
                    trainer.insert(k.into(), value);
                }
                k => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown key {k:?}; valid keys: {}",
                        known_keys().join(", ")
                    )))
                }
            }
        }
        let cluster: ClusterConfig = cluster.try_into()?;
        let trainer: TrainerConfig = trainer.try_into()?;
        cluster.validate()?;
        trainer.validate()?;
        Ok(Self { policy, cluster, trainer })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse()?;
        Self::default().with_overrides(table.iter().map(|(k, v)| (k.as_str(), v.clone())))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Layers `ADSAC_<KEY>` variables from `vars` over `self`.
    pub fn with_env(&self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let keys = known_keys();
        let pairs: Vec<(String, Value)> = vars
            .into_iter()
            .filter_map(|(name, raw)| {
                let key = name.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                keys.contains(&key).then(|| (key, parse_value(&raw)))
            })
            .collect();
        self.with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.clone())))
    }

    /// Defaults, then the optional file, then the process environment, then
    /// `overrides` (raw `key=value` strings).
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let base = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        let with_env = base.with_env(std::env::vars())?;
        with_env.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), parse_value(v))))
    }
}
