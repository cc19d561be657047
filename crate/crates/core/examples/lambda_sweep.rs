//! Evaluates the heuristics (and, given a directory of trained runs, the
//! learned policies) across arrival rates and draws the result as SVG.
//!
//!     cargo run --release --example lambda_sweep -- [checkpoint-root] [out.svg]
//!
//! The checkpoint root must hold `<policy>-seed<k>/` run directories as
//! written by `adsac train --out`.

use std::collections::BTreeMap;

use adsac::baselines::PolicyKind;
use adsac::env::ClusterConfig;
use adsac::harness::{line_chart_svg, run_sweep, summarize, Series, SweepSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let checkpoints = args.next().filter(|a| a != "-").map(Into::into);
    let out = args.next().unwrap_or_else(|| "sweep.svg".into());

    let mut policies = PolicyKind::HEURISTICS.to_vec();
    if checkpoints.is_some() {
        policies.extend([PolicyKind::SacMlp, PolicyKind::Dsac, PolicyKind::Adsac]);
    }
    let spec = SweepSpec {
        lambdas: vec![0.001, 0.00125, 0.0015, 0.00175, 0.002],
        policies,
        seeds: 2,
        episodes: 3,
        checkpoints,
    };
    let rows = run_sweep(&ClusterConfig::default(), &spec, |r| {
        eprintln!("{:<12} lambda {:<8} seed {}  reward {:>8.1}", r.policy, r.lambda, r.seed, r.test_reward)
    })
    .unwrap();

    let mut by_policy: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summarize(&rows) {
        println!("{:<12} {:<8} {:>9.2} {:>7.4}", s.policy, s.lambda, s.test_reward, s.crash_rate);
        by_policy.entry(s.policy).or_default().push((s.lambda, s.test_reward));
    }
    let series: Vec<Series> = by_policy
        .into_iter()
        .map(|(label, points)| Series { label, points })
        .collect();
    std::fs::write(&out, line_chart_svg("Test reward vs arrival rate", "lambda", "test reward", &series)).unwrap();
    println!("chart written to {out}");
}
