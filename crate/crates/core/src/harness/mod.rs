//! Experiment orchestration: configuration, run directories, evaluation,
//! λ sweeps, charts and the oracle checks.

mod artifacts;
pub mod cli;
mod config;
pub mod oracle;
mod report;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use artifacts::{
    decode_into_agent, encode_agent, git_blob_sha1, load_agent, manifest_path_for, unix_now, Artifacts, RunManifest,
    CHECKPOINT_FILE, MANIFEST_FILE, METRICS_FILE,
};
pub use config::{known_keys, parse_value, RunConfig, ENV_PREFIX};
pub use report::{chart_from_csv, line_chart_svg, Series};

use crate::baselines::PolicyKind;
use crate::env::{make_cluster, ClusterConfig, EdgeEnv};
use crate::error::{Error, Result};
use crate::sac::{evaluate, train, write_metrics_csv, Agent, EpochMetrics, EvalReport, GreedyPolicy};

/// Environment with the cluster drawn from `config.seed`.
pub fn build_env(config: &ClusterConfig) -> EdgeEnv {
    EdgeEnv::new(config.clone(), make_cluster(config, config.seed))
}

/// First evaluation seed used for final evaluations under run seed `seed`.
/// Blocks are 2^20 episodes apart, so distinct seeds never share episodes.
pub fn eval_seed_base(seed: u64) -> u64 {
    seed << 20
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Result of [`train_run`].
#[derive(Debug)]
pub struct TrainedRun {
    pub dir: PathBuf,
    pub agent: Agent,
    pub metrics: Vec<EpochMetrics>,
    pub manifest: RunManifest,
}

/// Trains `config.policy` and writes metrics, checkpoint and manifest into
/// `dir`.
pub fn train_run(config: &RunConfig, dir: &Path, on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainedRun> {
    let arch = config.policy.arch().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{} is a heuristic and needs no training; learned policies: sac_mlp, dsac, adsac",
            config.policy
        ))
    })?;
    config.cluster.validate()?;
    create_dir(dir)?;
    let started = unix_now();
    let env = build_env(&config.cluster);
    let outcome = train(&env, arch, &config.trainer, on_epoch)?;

    let mut csv = Vec::new();
    write_metrics_csv(&outcome.metrics, &mut csv)?;
    write_file(&dir.join(METRICS_FILE), &csv)?;
    let bytes = encode_agent(&outcome.agent);
    write_file(&dir.join(CHECKPOINT_FILE), &bytes)?;
    let manifest = RunManifest::new(config, started, unix_now(), &bytes);
    manifest.write(dir)?;
    Ok(TrainedRun {
        dir: dir.to_path_buf(),
        agent: outcome.agent,
        metrics: outcome.metrics,
        manifest,
    })
}

/// Greedy evaluation of a policy: a heuristic built from `kind` and
/// `seed`, or the trained `agent`.
pub fn evaluate_policy(
    kind: PolicyKind,
    agent: Option<&Agent>,
    env: &EdgeEnv,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let base = eval_seed_base(seed);
    if let Some(mut h) = kind.heuristic(seed) {
        return Ok(evaluate(h.as_mut(), env, episodes, base));
    }
    let agent = agent.ok_or_else(|| Error::Missing(format!("{kind} needs a trained checkpoint")))?;
    let mut greedy = GreedyPolicy::new(&agent.policy, &agent.policy_params);
    Ok(evaluate(&mut greedy, env, episodes, base))
}

/// One row of the `eval` CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub policy: String,
    pub lambda: f64,
    pub seed: u64,
    pub episodes: usize,
    pub test_reward_mean: f64,
    pub test_reward_std: f64,
    pub crash_rate: f64,
    pub lost_utility: f64,
}

impl EvalRow {
    pub fn new(kind: PolicyKind, lambda: f64, seed: u64, report: &EvalReport) -> Self {
        Self {
            policy: kind.tag().into(),
            lambda,
            seed,
            episodes: report.episodes.len(),
            test_reward_mean: report.reward_mean,
            test_reward_std: report.reward_std,
            crash_rate: report.crash_rate,
            lost_utility: report.lost_utility,
        }
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

/// Grid of a λ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    /// Seeds `0..seeds` per cell.
    pub seeds: u64,
    pub episodes: usize,
    /// Root holding `<policy>-seed<k>/` run directories for learned policies.
    pub checkpoints: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambdas: vec![0.001, 0.0015, 0.002],
            policies: PolicyKind::HEURISTICS.to_vec(),
            seeds: 3,
            episodes: 5,
            checkpoints: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.policies.is_empty() || self.seeds == 0 || self.episodes == 0 {
            return Err(Error::InvalidConfig(
                "sweep needs at least one lambda, policy, seed and episode".into(),
            ));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!("sweep lambda must be positive, got {l}")));
        }
        Ok(())
    }
}

/// Run directory of a learned policy's checkpoint for `seed` under `root`.
pub fn checkpoint_dir(root: &Path, kind: PolicyKind, seed: u64) -> PathBuf {
    root.join(format!("{}-seed{seed}", kind.tag()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub policy: String,
    pub lambda: f64,
    pub seed: u64,
    pub test_reward: f64,
    pub crash_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub policy: String,
    pub lambda: f64,
    pub test_reward: f64,
    pub crash_rate: f64,
}

/// Means over seeds, one row per (policy, λ) in grid order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    let mut out: Vec<(SweepSummaryRow, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _)| s.policy == r.policy && s.lambda == r.lambda) {
            Some((s, n)) => {
                s.test_reward += r.test_reward;
                s.crash_rate += r.crash_rate;
                *n += 1;
            }
            None => out.push((
                SweepSummaryRow {
                    policy: r.policy.clone(),
                    lambda: r.lambda,
                    test_reward: r.test_reward,
                    crash_rate: r.crash_rate,
                },
                1,
            )),
        }
    }
    out.into_iter()
        .map(|(mut s, n)| {
            s.test_reward /= n as f64;
            s.crash_rate /= n as f64;
            s
        })
        .collect()
}

/// Evaluates every (policy, λ, seed) cell on `base` with λ replaced. Learned
/// policies load the checkpoint trained under the same seed; all checkpoints
/// are located before any cell runs.
pub fn run_sweep(base: &ClusterConfig, spec: &SweepSpec, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut agents = Vec::new();
    for &kind in spec.policies.iter().filter(|k| k.is_learned()) {
        for seed in 0..spec.seeds {
            let cell = || format!("policy {kind}, seed {seed}, lambdas {:?}", spec.lambdas);
            let root = spec.checkpoints.as_deref().ok_or_else(|| {
                Error::Missing(format!("missing checkpoint for cell ({}): no checkpoint root given", cell()))
            })?;
            let dir = checkpoint_dir(root, kind, seed);
            if !dir.join(CHECKPOINT_FILE).is_file() {
                return Err(Error::Missing(format!(
                    "missing checkpoint for cell ({}): expected {}",
                    cell(),
                    dir.join(CHECKPOINT_FILE).display()
                )));
            }
            let (agent, trained) = load_agent(&dir, None)?;
            if trained.policy != kind {
                return Err(Error::Layout(format!(
                    "{} holds a {} run, expected {kind}",
                    dir.display(),
                    trained.policy
                )));
            }
            agents.push(((kind, seed), agent));
        }
    }
    let mut rows = Vec::new();
    for &kind in &spec.policies {
        for &lambda in &spec.lambdas {
            let env = build_env(&ClusterConfig { lambda, ..base.clone() });
            for seed in 0..spec.seeds {
                let agent = agents.iter().find(|(k, _)| *k == (kind, seed)).map(|(_, a)| a);
                let report = evaluate_policy(kind, agent, &env, spec.episodes, seed)?;
                let row = SweepRow {
                    policy: kind.tag().into(),
                    lambda,
                    seed,
                    test_reward: report.reward_mean,
                    crash_rate: report.crash_rate,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, lambda: f64, seed: u64, r: f64, c: f64) -> SweepRow {
        SweepRow {
            policy: policy.into(),
            lambda,
            seed,
            test_reward: r,
            crash_rate: c,
        }
    }

    #[test]
    fn summary_averages_over_seeds() {
        let rows = [
            row("random", 0.001, 0, 1.0, 0.1),
            row("random", 0.001, 1, 3.0, 0.3),
            row("random", 0.002, 0, 5.0, 0.5),
            row("prophet", 0.001, 0, 7.0, 0.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].test_reward, s[0].crash_rate), (2.0, 0.2));
        assert_eq!(s[2].policy, "prophet");
    }

    #[test]
    fn sweep_spec_validation() {
        assert!(SweepSpec::default().validate().is_ok());
        assert!(SweepSpec { lambdas: vec![], ..Default::default() }.validate().is_err());
        assert!(SweepSpec { lambdas: vec![0.0], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn learned_cell_without_checkpoint_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            policies: vec![PolicyKind::Random, PolicyKind::Dsac],
            checkpoints: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let err = run_sweep(&ClusterConfig::default(), &spec, |_| {}).unwrap_err().to_string();
        assert!(err.contains("dsac") && err.contains("seed 0") && err.contains("dsac-seed0"), "{err}");
    }

    #[test]
    fn eval_seed_blocks_are_disjoint() {
        assert!(eval_seed_base(1) - eval_seed_base(0) > 1000);
    }
}
