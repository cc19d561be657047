//! Evaluates the four hand-written schedulers on the default cluster.
//!
//!     cargo run --release --example heuristics -- [episodes] [seeds]

use adsac::baselines::PolicyKind;
use adsac::env::ClusterConfig;
use adsac::harness::{build_env, evaluate_policy};

fn main() {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(5, |a| a.parse().expect("episodes"));
    let seeds: u64 = args.next().map_or(3, |a| a.parse().expect("seeds"));

    let config = ClusterConfig::default();
    let env = build_env(&config);
    println!("lambda {}  horizon {}  {} models", config.lambda, config.horizon, config.n_models());
    println!("{:<12} {:>12} {:>10} {:>13}", "policy", "test reward", "crash %", "lost utility");
    for kind in PolicyKind::HEURISTICS {
        let (mut reward, mut crash, mut lost) = (0.0, 0.0, 0.0);
        for seed in 0..seeds {
            let r = evaluate_policy(kind, None, &env, episodes, seed).unwrap();
            reward += r.reward_mean;
            crash += r.crash_rate;
            lost += r.lost_utility;
        }
        let n = seeds as f64;
        println!("{:<12} {:>12.1} {:>10.2} {:>13.1}", kind, reward / n, 100.0 * crash / n, lost / n);
    }
}
