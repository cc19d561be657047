use adsac::baselines::PolicyKind;
use adsac::env::ClusterConfig;
use adsac::harness::{
    build_env, checkpoint_dir, evaluate_policy, load_agent, run_sweep, summarize, train_run, RunConfig, SweepSpec,
};
use adsac::sac::TrainerConfig;

fn tiny_run(kind: PolicyKind, seed: u64) -> RunConfig {
    RunConfig {
        policy: kind,
        cluster: ClusterConfig {
            task_budget: 60,
            ..Default::default()
        },
        trainer: TrainerConfig {
            epochs: 2,
            steps_per_epoch: 40,
            warmup_steps: 30,
            batch: 8,
            hidden: 16,
            eval_episodes: 1,
            seed,
            ..Default::default()
        },
    }
}

#[test]
fn random_crashes_more_under_heavier_load() {
    let spec = SweepSpec {
        lambdas: vec![0.001, 0.002],
        policies: vec![PolicyKind::Random],
        ..Default::default()
    };
    let rows = run_sweep(&ClusterConfig::default(), &spec, |_| {}).unwrap();
    assert_eq!(rows.len(), 6);
    for seed in 0..3 {
        let at = |l: f64| rows.iter().find(|r| r.lambda == l && r.seed == seed).unwrap().crash_rate;
        assert!(at(0.002) > at(0.001), "seed {seed}: {} vs {}", at(0.002), at(0.001));
    }
    assert_eq!(summarize(&rows).len(), 2);
}

#[test]
fn checkpoint_reload_reproduces_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_run(PolicyKind::Adsac, 2);
    let run = train_run(&config, tmp.path(), |_| {}).unwrap();
    let (agent, loaded) = load_agent(tmp.path(), None).unwrap();
    assert_eq!(loaded, config);
    assert_eq!(agent.policy_params, run.agent.policy_params);
    assert_eq!(agent.critics.q2_target, run.agent.critics.q2_target);
    let env = build_env(&config.cluster);
    let a = evaluate_policy(PolicyKind::Adsac, Some(&run.agent), &env, 2, 5).unwrap();
    let b = evaluate_policy(PolicyKind::Adsac, Some(&agent), &env, 2, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn heuristic_cannot_be_trained() {
    let tmp = tempfile::tempdir().unwrap();
    let err = train_run(&tiny_run(PolicyKind::Prophet, 0), tmp.path(), |_| {}).unwrap_err();
    assert!(err.to_string().contains("prophet"));
}

#[test]
fn sweep_with_trained_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..2 {
        let dir = checkpoint_dir(tmp.path(), PolicyKind::SacMlp, seed);
        train_run(&tiny_run(PolicyKind::SacMlp, seed), &dir, |_| {}).unwrap();
    }
    let spec = SweepSpec {
        lambdas: vec![0.001, 0.002],
        policies: vec![PolicyKind::SacMlp, PolicyKind::RoundRobin],
        seeds: 2,
        episodes: 1,
        checkpoints: Some(tmp.path().to_path_buf()),
    };
    let base = ClusterConfig {
        task_budget: 40,
        ..Default::default()
    };
    let rows = run_sweep(&base, &spec, |_| {}).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert_eq!(summarize(&rows).len(), 4);
    assert!(rows.iter().all(|r| r.test_reward.is_finite()));
}
