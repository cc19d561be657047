//! Short side-by-side training of the three learned variants on one seed:
//! MLP actor, MLP diffusion actor, attention diffusion actor.
//!
//!     cargo run --release --example ablation -- [epochs]

use std::time::Instant;

use adsac::baselines::PolicyKind;
use adsac::harness::{build_env, evaluate_policy, train_run, RunConfig};
use adsac::sac::TrainerConfig;

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(8, |a| a.parse().expect("epochs"));
    let root = tempfile::tempdir().unwrap();
    for kind in [PolicyKind::SacMlp, PolicyKind::Dsac, PolicyKind::Adsac] {
        let config = RunConfig {
            policy: kind,
            trainer: TrainerConfig {
                epochs,
                steps_per_epoch: 200,
                warmup_steps: 500,
                hidden: 64,
                batch: 64,
                eval_episodes: 1,
                seed: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let started = Instant::now();
        let run = train_run(&config, &root.path().join(kind.tag()), |_| {}).unwrap();
        let env = build_env(&config.cluster);
        let r = evaluate_policy(kind, Some(&run.agent), &env, 3, 3).unwrap();
        let curve: Vec<String> = run.metrics.iter().map(|m| format!("{:.0}", m.eval_reward_mean)).collect();
        println!(
            "{:<8} {:>6.1}s  test {:>8.2}  crash {:.3}  curve [{}]",
            kind,
            started.elapsed().as_secs_f64(),
            r.reward_mean,
            r.crash_rate,
            curve.join(" ")
        );
    }
}
