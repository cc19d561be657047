//! Run directories: metrics CSV, parameter checkpoint and manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Matrix, ParamSet};
use crate::sac::Agent;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MANIFEST_FILE: &str = "manifest.toml";

const GROUPS: [&str; 5] = ["policy", "q1", "q2", "q1_target", "q2_target"];

/// Hex SHA-1 of `bytes` framed as a git blob.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn groups_mut(agent: &mut Agent) -> [&mut ParamSet; 5] {
    let c = &mut agent.critics;
    [&mut agent.policy_params, &mut c.q1, &mut c.q2, &mut c.q1_target, &mut c.q2_target]
}

/// Every parameter of the agent, names prefixed by their group.
pub fn encode_agent(agent: &Agent) -> Vec<u8> {
    let c = &agent.critics;
    let sets = [&agent.policy_params, &c.q1, &c.q2, &c.q1_target, &c.q2_target];
    let names: Vec<(String, &Matrix)> = GROUPS
        .iter()
        .zip(sets)
        .flat_map(|(g, ps)| ps.names().iter().zip(ps.values()).map(move |(n, m)| (format!("{g}/{n}"), m)))
        .collect();
    checkpoint::encode(names.iter().map(|(n, m)| (n.as_str(), *m)))
}

/// Loads a checkpoint into an agent of matching layout.
pub fn decode_into_agent(bytes: &[u8], agent: &mut Agent) -> Result<()> {
    let entries = checkpoint::decode(bytes)?;
    for (group, ps) in GROUPS.iter().zip(groups_mut(agent)) {
        let prefix = format!("{group}/");
        let sub: Vec<(String, Matrix)> = entries
            .iter()
            .filter_map(|(n, m)| n.strip_prefix(&prefix).map(|s| (s.to_owned(), m.clone())))
            .collect();
        checkpoint::load_into(ps, &sub)?;
    }
    let expected: usize = groups_mut(agent).iter().map(|p| p.len()).sum();
    if entries.len() != expected {
        return Err(Error::Layout(format!(
            "checkpoint holds {} tensors, the configured agent has {expected}",
            entries.len()
        )));
    }
    Ok(())
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub metrics: String,
    pub checkpoint: String,
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub policy: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub checkpoint_sha1: String,
    pub artifacts: Artifacts,
    /// Flat configuration echo.
    pub config: toml::Table,
}

impl RunManifest {
    pub fn new(config: &RunConfig, started_unix: u64, finished_unix: u64, checkpoint_bytes: &[u8]) -> Self {
        Self {
            policy: config.policy.tag().to_owned(),
            seed: config.trainer.seed,
            started_unix,
            finished_unix,
            checkpoint_sha1: git_blob_sha1(checkpoint_bytes),
            artifacts: Artifacts {
                metrics: METRICS_FILE.into(),
                checkpoint: CHECKPOINT_FILE.into(),
            },
            config: config.to_table(),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::default().with_overrides(self.config.iter().map(|(k, v)| (k.as_str(), v.clone())))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, toml::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Manifest next to a checkpoint file, or inside a run directory.
pub fn manifest_path_for(checkpoint_or_dir: &Path) -> PathBuf {
    if checkpoint_or_dir.is_dir() {
        checkpoint_or_dir.join(MANIFEST_FILE)
    } else {
        checkpoint_or_dir.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE)
    }
}

/// Rebuilds a trained agent from a checkpoint and the manifest beside it.
/// `config` replaces the manifest's configuration when given.
pub fn load_agent(checkpoint_or_dir: &Path, config: Option<&RunConfig>) -> Result<(Agent, RunConfig)> {
    let ckpt = if checkpoint_or_dir.is_dir() {
        checkpoint_or_dir.join(CHECKPOINT_FILE)
    } else {
        checkpoint_or_dir.to_path_buf()
    };
    let bytes = std::fs::read(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    let config = match config {
        Some(c) => c.clone(),
        None => RunManifest::read(&manifest_path_for(checkpoint_or_dir))?.run_config()?,
    };
    let mut agent = config
        .policy
        .agent(config.cluster.state_dim(), config.cluster.n_models(), &config.trainer)?;
    decode_into_agent(&bytes, &mut agent).map_err(|e| match e {
        Error::Layout(msg) => Error::Layout(format!("{}: {msg}", ckpt.display())),
        other => other,
    })?;
    Ok((agent, config))
}
