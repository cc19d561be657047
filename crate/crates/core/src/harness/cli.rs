//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::oracle::{run_oracle_checks, OracleOptions};
use super::{
    build_env, chart_from_csv, evaluate_policy, load_agent, run_sweep, summarize, train_run, write_csv, EvalRow,
    RunConfig, RunManifest, SweepSpec,
};
use crate::baselines::PolicyKind;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "adsac", version, about = "Edge generative-service scheduling with diffusion-policy SAC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a learned policy and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a heuristic tag.
    Eval(EvalArgs),
    /// Evaluate policies over a grid of arrival rates and seeds.
    Sweep(SweepArgs),
    /// Run the enumeration, variance and gradient oracles.
    OracleCheck(OracleArgs),
    /// Render a metrics or sweep CSV as an SVG line chart.
    Report(ReportArgs),
}

/// Configuration sources shared by every subcommand that builds a run.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat TOML file whose keys are config field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Policy tag.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Any other key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            out.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_owned(), v));
            }
        };
        flag("policy", self.policy.as_ref().map(|p| format!("{p:?}")));
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("lambda", self.lambda.map(|v| format!("{v:?}")));
        flag("epochs", self.epochs.map(|v| v.to_string()));
        flag("steps_per_epoch", self.steps_per_epoch.map(|v| v.to_string()));
        flag("warmup_steps", self.warmup_steps.map(|v| v.to_string()));
        flag("eval_episodes", self.eval_episodes.map(|v| v.to_string()));
        Ok(out)
    }

    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides()?)
    }

    fn load_over(&self, base: RunConfig) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => base,
        };
        base.with_env(std::env::vars())?.with_overrides(
            self.overrides()?
                .iter()
                .map(|(k, v)| (k.as_str(), super::parse_value(v))),
        )
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory (default runs/<policy>-seed<seed>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint file or run directory; its manifest supplies the config.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    /// CSV file for the report row.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Flat TOML file for the cluster shared by every cell.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated policy tags (default: the four heuristics).
    #[arg(long, value_delimiter = ',')]
    pub policies: Vec<String>,
    /// Comma-separated arrival rates.
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.0015, 0.002])]
    pub lambdas: Vec<f64>,
    /// Seeds 0..N per cell.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    /// Directory holding <policy>-seed<k>/ run directories.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Random draws per gradient check.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Negate analytic gradients; every gradient check must then fail.
    #[arg(long)]
    pub mis_signed: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.csv or sweep_summary.csv
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let config = args.config.load()?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", config.policy, config.trainer.seed)));
    let quiet = args.quiet;
    let run = train_run(&config, &dir, |m| {
        if !quiet {
            eprintln!(
                "epoch {:>4} steps {:>8} eval {:>9.2} crash {:.4} entropy {:.3}",
                m.epoch, m.env_steps, m.eval_reward_mean, m.crash_rate, m.mean_entropy
            );
        }
    })?;
    writeln!(out, "run directory: {}", run.dir.display()).ok();
    if let Some(last) = run.metrics.last() {
        writeln!(
            out,
            "final eval reward {:.3} (std {:.3}), crash rate {:.4}",
            last.eval_reward_mean, last.eval_reward_std, last.crash_rate
        )
        .ok();
    }
    writeln!(out, "checkpoint sha1 {}", run.manifest.checkpoint_sha1).ok();
    Ok(0)
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let (config, agent) = match &args.checkpoint {
        Some(path) => {
            let manifest = RunManifest::read(&super::manifest_path_for(path))?;
            let config = args.config.load_over(manifest.run_config()?)?;
            let (agent, config) = load_agent(path, Some(&config))?;
            (config, Some(agent))
        }
        None => {
            let config = args.config.load()?;
            if config.policy.is_learned() {
                return Err(Error::Missing(format!(
                    "{} is a learned policy; pass --checkpoint",
                    config.policy
                )));
            }
            (config, None)
        }
    };
    let env = build_env(&config.cluster);
    let seed = config.trainer.seed;
    let report = evaluate_policy(config.policy, agent.as_ref(), &env, args.episodes, seed)?;
    let row = EvalRow::new(config.policy, config.cluster.lambda, seed, &report);
    writeln!(
        out,
        "{} lambda {} seed {}: test reward {:.3} +- {:.3}, crash rate {:.4}, lost utility {:.3} ({} episodes)",
        row.policy, row.lambda, row.seed, row.test_reward_mean, row.test_reward_std, row.crash_rate, row.lost_utility, row.episodes
    )
    .ok();
    if let Some(path) = &args.out {
        write_csv(&[row], path)?;
    }
    Ok(0)
}

fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let base = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let policies = if args.policies.is_empty() {
        PolicyKind::HEURISTICS.to_vec()
    } else {
        args.policies.iter().map(|p| p.trim().parse()).collect::<Result<_>>()?
    };
    let spec = SweepSpec {
        lambdas: args.lambdas.clone(),
        policies,
        seeds: args.seeds,
        episodes: args.episodes,
        checkpoints: args.checkpoints.clone(),
    };
    let rows = run_sweep(&base.cluster, &spec, |r| {
        eprintln!(
            "{:<12} lambda {:<7} seed {}: reward {:>9.2} crash {:.4}",
            r.policy, r.lambda, r.seed, r.test_reward, r.crash_rate
        )
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let summary = summarize(&rows);
    write_csv(&rows, &args.out.join("sweep.csv"))?;
    write_csv(&summary, &args.out.join("sweep_summary.csv"))?;
    for s in &summary {
        writeln!(
            out,
            "{:<12} lambda {:<7} mean reward {:>9.2} mean crash {:.4}",
            s.policy, s.lambda, s.test_reward, s.crash_rate
        )
        .ok();
    }
    writeln!(out, "{} rows written to {}", rows.len(), args.out.join("sweep.csv").display()).ok();
    Ok(0)
}

fn oracle_check(args: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let opts = OracleOptions {
        points: args.points,
        mis_signed: args.mis_signed,
        ..Default::default()
    };
    let results = run_oracle_checks(&opts);
    for r in &results {
        writeln!(out, "{r}").ok();
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    writeln!(out, "{} checks, {failed} failed", results.len()).ok();
    Ok(if failed == 0 { 0 } else { 1 })
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let svg = chart_from_csv(&args.input)?;
    write_out(&args.out, svg.as_bytes())?;
    writeln!(out, "wrote {}", args.out.display()).ok();
    Ok(0)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::OracleCheck(a) => oracle_check(a, out),
        Command::Report(a) => report(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
