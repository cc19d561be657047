//! Trains the attention-diffusion SAC agent for a few epochs, reloads the
//! checkpoint from disk and evaluates it against Round Robin.
//!
//!     cargo run --release --example train_adsac -- [run-dir] [epochs]

use adsac::baselines::PolicyKind;
use adsac::harness::{build_env, evaluate_policy, load_agent, train_run, RunConfig};
use adsac::sac::TrainerConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "runs/example-adsac".into());
    let epochs: usize = args.next().map_or(10, |a| a.parse().expect("epochs"));

    let config = RunConfig {
        policy: PolicyKind::Adsac,
        trainer: TrainerConfig {
            epochs,
            steps_per_epoch: 200,
            warmup_steps: 500,
            hidden: 64,
            batch: 64,
            eval_episodes: 2,
            seed: 1,
            ..Default::default()
        },
        ..Default::default()
    };

    let run = train_run(&config, dir.as_ref(), |m| {
        println!(
            "epoch {:>3}  eval reward {:>8.2}  crash {:.3}  policy loss {:>8.3}  entropy {:.3}",
            m.epoch, m.eval_reward_mean, m.crash_rate, m.policy_loss, m.mean_entropy
        )
    })
    .unwrap();
    println!("artifacts in {} (checkpoint {})", run.dir.display(), run.manifest.checkpoint_sha1);

    let (agent, config) = load_agent(&run.dir, None).unwrap();
    let env = build_env(&config.cluster);
    let learned = evaluate_policy(PolicyKind::Adsac, Some(&agent), &env, 3, 0).unwrap();
    let rr = evaluate_policy(PolicyKind::RoundRobin, None, &env, 3, 0).unwrap();
    println!("adsac       {:>8.2} (crash {:.3})", learned.reward_mean, learned.crash_rate);
    println!("round_robin {:>8.2} (crash {:.3})", rr.reward_mean, rr.crash_rate);
}
