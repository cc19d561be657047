//! Steps one episode with the Crash Avoid scheduler, prints the first few
//! decisions and writes the whole trace as CSV.
//!
//!     cargo run --release --example episode_trace -- [out.csv]

use adsac::baselines::crash_avoid_policy;
use adsac::env::{write_trace_csv, ClusterConfig};
use adsac::harness::build_env;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trace.csv".into());
    let config = ClusterConfig {
        task_budget: 200,
        ..Default::default()
    };
    let mut env = build_env(&config);
    env.enable_trace();
    env.reset(1);
    while !env.is_done() {
        let a = crash_avoid_policy(&env);
        env.step(a);
    }
    for row in env.trace().iter().take(8) {
        println!(
            "t={:>9.1} task {:>3} type {} demand {:>3} -> model {:>2}  reward {:>7.3}{}  loads {:?}",
            row.time,
            row.task_id,
            row.ttype,
            row.demand,
            row.action,
            row.reward,
            if row.crashed { " CRASH" } else { "" },
            row.server_loads
        );
    }
    let m = env.metrics();
    println!(
        "{} tasks, {} crashed, reward {:.2}, lost utility {:.2}",
        m.total_tasks, m.crashed_tasks, m.cumulative_reward, m.lost_utility
    );
    let file = std::fs::File::create(&out).expect("create trace file");
    write_trace_csv(env.trace(), file).unwrap();
    println!("trace written to {out}");
}
