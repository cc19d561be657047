use proptest::prelude::*;

use super::*;

fn single_server(capacity: u32) -> (ClusterConfig, Cluster) {
    let config = ClusterConfig {
        n_servers: 1,
        models_per_server: 1,
        ..Default::default()
    };
    let cluster = Cluster::from_parts(&[capacity], 1, vec![vec![0.5, 0.6, 0.7, 0.8]]);
    (config, cluster)
}

fn task_at(t: f64, ttype: usize, demand: u32, config: &ClusterConfig) -> Task {
    Task::new(0, TaskType(ttype), demand, t, config)
}

#[test]
fn idle_server_accepts_and_earns_utility() {
    let (config, cluster) = single_server(1500);
    let mut env = EdgeEnv::scripted(config.clone(), cluster, vec![task_at(1.0, 3, 250, &config)]);
    env.reset(0);
    let out = env.step(0);
    assert!(!out.info.crashed);
    assert!((out.reward - (0.8 + 0.002 * 250.0)).abs() < 1e-12);
    assert!(out.done);
}

#[test]
fn overloaded_server_crashes_with_penalty() {
    let (config, cluster) = single_server(1500);
    // 1400 steps committed at t = 0 (ten tasks of 140), then a 250-step task
    let mut tasks: Vec<Task> = (0..10).map(|i| task_at(i as f64 * 1e-3, 0, 140, &config)).collect();
    tasks.push(task_at(1000.0, 1, 250, &config));
    let mut env = EdgeEnv::scripted(config.clone(), cluster, tasks);
    env.reset(0);
    for _ in 0..10 {
        assert!(!env.step(0).info.crashed);
    }
    assert_eq!(env.servers()[0].load(), 1400);
    let now = env.clock();
    let expect_pen = penalty(&env.servers()[0], now, &config);
    let out = env.step(0);
    assert!(out.info.crashed);
    assert_eq!(out.info.n_terminated, 10);
    assert_eq!(out.reward, -expect_pen);
    assert_eq!(env.servers()[0].load(), 0);
    assert_eq!(env.metrics().crashed_tasks, 11);
    assert_eq!(env.metrics().surviving_tasks, 0);
}

#[test]
fn penalty_cases() {
    let config = ClusterConfig::default();
    let mut server = Server {
        server_id: 0,
        capacity: 2000,
        in_flight: vec![],
    };
    assert_eq!(penalty(&server, 5.0, &config), 1.0);
    server.in_flight.push(InFlight {
        task_id: 0,
        demand: 100,
        start_time: 0.0,
        duration: 10.0,
        utility: 1.0,
    });
    assert_eq!(penalty(&server, 5.0, &config), 1.5);
    server.in_flight[0].start_time = 5.0;
    server.in_flight.push(server.in_flight[0].clone());
    let p2 = ClusterConfig {
        penalty_p: 2.0,
        ..Default::default()
    };
    assert_eq!(penalty(&server, 5.0, &p2), 6.0);
}

#[test]
fn encode_state_layout() {
    let config = ClusterConfig::default();
    let cluster = make_cluster(&config, 1);
    let mut env = EdgeEnv::new(config.clone(), cluster);
    let s = env.reset(3);
    assert_eq!(s.len(), 21);
    assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
    for srv in 0..5 {
        assert_eq!(s[6 + 3 * srv + 1], 1.0);
        assert_eq!(s[6 + 3 * srv + 2], 1.0);
    }
    let task = Task::new(0, TaskType(2), 200, 0.0, &config);
    let servers = vec![
        Server {
            server_id: 0,
            capacity: 2000,
            in_flight: vec![InFlight {
                task_id: 9,
                demand: 500,
                start_time: 0.0,
                duration: 1.0,
                utility: 0.0,
            }],
        };
        5
    ];
    let s = encode_state(&config, env.cluster(), &servers, Some(&task));
    assert_eq!(&s[..4], &[0.0, 0.0, 1.0, 0.0]);
    assert_eq!(s[4], 200.0 / 250.0);
    assert_eq!(s[5], 30_000.0 / (250.0 * 150.0));
    assert_eq!(s[6], 2000.0 / 3000.0);
    assert_eq!(s[7], 0.75);
}

#[test]
fn feasible_action_cases() {
    let config = ClusterConfig::default();
    let cluster = Cluster::from_parts(&[1500, 1600, 1700, 1800, 1900], 4, vec![vec![0.5; 4]; 20]);
    let fill = |cap_left: [u32; 5]| -> Vec<Task> {
        // one task per server, sized to leave `cap_left`, then a 200-step probe
        let mut v: Vec<Task> = (0..5)
            .map(|s| task_at(s as f64, 0, 1500 + 100 * s as u32 - cap_left[s], &config))
            .collect();
        v.push(task_at(10.0, 0, 200, &config));
        v
    };
    let run = |tasks: Vec<Task>| {
        let mut env = EdgeEnv::scripted(config.clone(), cluster.clone(), tasks);
        env.reset(0);
        for s in 0..5 {
            env.step(4 * s);
        }
        env.feasible_actions()
    };
    let all_full = run(fill([0, 0, 0, 0, 0]));
    assert!(all_full.iter().all(|f| !f));
    let one_slack = run(fill([0, 0, 250, 100, 0]));
    let expect: Vec<bool> = (0..20).map(|m| m / 4 == 2).collect();
    assert_eq!(one_slack, expect);

    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 0));
    env.reset(1);
    assert!(env.feasible_actions().iter().all(|&f| f));
}

#[test]
fn reset_is_deterministic_and_seed_sensitive() {
    let config = ClusterConfig::default();
    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 0));
    let a = env.reset(17);
    let ta = env.pending().cloned();
    let b = env.reset(17);
    assert_eq!(a, b);
    assert_eq!(ta, env.pending().cloned());
    assert!(a[6..].chunks(3).all(|c| c[1] == 1.0));
    assert_eq!(env.metrics(), &MetricsAccumulator::default());

    // first tasks collide in (type, demand) with probability 1/(4*151)
    let mut collisions = 0;
    for seed in 0..200u64 {
        env.reset(seed * 2 + 1000);
        let x = env.pending().cloned().unwrap();
        env.reset(seed * 2 + 1001);
        let y = env.pending().cloned().unwrap();
        if x.ttype == y.ttype && x.demand == y.demand && x.arrival_time == y.arrival_time {
            collisions += 1;
        }
    }
    assert!(collisions <= 1, "{collisions} collisions");
}

#[test]
fn arrival_counts_are_poisson() {
    let config = ClusterConfig::default();
    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 0));
    let n = 2000;
    let counts: Vec<f64> = (0..n)
        .map(|seed| {
            env.reset(seed);
            let mut k = 0u64;
            while !env.is_done() {
                env.step(0);
                k += 1;
            }
            assert_eq!(k, env.metrics().total_tasks);
            k as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let target = config.lambda * config.horizon;
    assert!((mean / target - 1.0).abs() < 0.05, "mean {mean}");
    assert!((var / target - 1.0).abs() < 0.10, "variance {var}");
    // first 100 episodes alone
    let head = counts[..100].iter().sum::<f64>() / 100.0;
    assert!((head / target - 1.0).abs() < 0.05, "mean over 100 episodes {head}");
}

#[test]
fn trace_csv_has_header_and_rows() {
    let config = ClusterConfig {
        horizon: 20_000.0,
        ..Default::default()
    };
    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 2));
    env.enable_trace();
    env.reset(4);
    let mut a = 0;
    while !env.is_done() {
        env.step(a % 20);
        a += 7;
    }
    let mut buf = Vec::new();
    write_trace_csv(env.trace(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,time,task_id,ttype,demand,action,reward,crashed,server_load_0,server_load_1,server_load_2,server_load_3,server_load_4"
    );
    assert_eq!(lines.count(), env.trace().len());
}

fn run_actions(config: &ClusterConfig, seed: u64, actions: &[usize]) -> (Vec<StepOutcome>, EdgeEnv) {
    let mut env = EdgeEnv::new(config.clone(), make_cluster(config, seed ^ 0xabc));
    env.enable_trace();
    env.reset(seed);
    let mut outs = Vec::new();
    let mut i = 0;
    while !env.is_done() {
        let out = env.step(actions[i % actions.len()]);
        for s in env.servers() {
            assert!(s.load() <= s.capacity, "server {} over capacity", s.server_id);
        }
        outs.push(out);
        i += 1;
    }
    (outs, env)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episode_invariants(seed in 0u64..10_000, actions in prop::collection::vec(0usize..20, 1..40)) {
        let config = ClusterConfig { horizon: 2e5, ..Default::default() };
        let (outs, env) = run_actions(&config, seed, &actions);
        let m = env.metrics();
        // crash accounting
        let crashes: u64 = outs.iter().filter(|o| o.info.crashed).map(|o| 1 + o.info.n_terminated as u64).sum();
        prop_assert_eq!(m.crashed_tasks, crashes);
        prop_assert_eq!(m.total_tasks, m.surviving_tasks + m.crashed_tasks);
        prop_assert!(m.crashed_tasks <= m.total_tasks);
        // conservation
        let total: f64 = outs.iter().map(|o| o.reward).sum();
        prop_assert!((total - m.cumulative_reward).abs() < 1e-9);
        prop_assert!((m.cumulative_reward - (m.utility_earned - m.penalty_total)).abs() < 1e-9);
        // done only at the end
        prop_assert!(outs[..outs.len() - 1].iter().all(|o| !o.done));
        prop_assert!(outs.last().unwrap().done);
        for o in &outs {
            prop_assert!(o.next_state.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        // determinism
        let (outs2, env2) = run_actions(&config, seed, &actions);
        prop_assert_eq!(outs, outs2);
        prop_assert_eq!(env.trace(), env2.trace());
    }

    #[test]
    fn progress_is_monotone(start in 0.0f64..1e5, dur in 1.0f64..1e5, a in 0.0f64..3e5, b in 0.0f64..3e5) {
        let mut t = Task::new(0, TaskType(0), 100, start, &ClusterConfig::default());
        t.duration = dur;
        t.start_time = Some(start);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p, q) = (task_progress(&t, lo), task_progress(&t, hi));
        prop_assert!(p <= q);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    }
}

#[test]
#[should_panic(expected = "after the episode ended")]
fn step_after_done_panics() {
    let (config, cluster) = single_server(2000);
    let mut env = EdgeEnv::scripted(config.clone(), cluster, vec![task_at(1.0, 0, 100, &config)]);
    env.reset(0);
    env.step(0);
    env.step(0);
}

#[test]
#[should_panic(expected = "out of range")]
fn action_out_of_range_panics() {
    let config = ClusterConfig::default();
    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 0));
    env.reset(0);
    env.step(20);
}

#[test]
fn completions_release_capacity_before_arrivals() {
    let (config, cluster) = single_server(1500);
    let c = ClusterConfig {
        duration_per_step: 1.0,
        ..config
    };
    // first task (1000 steps) ends exactly when the second (1000 steps) arrives
    let tasks = vec![task_at(0.5, 0, 1000, &c), task_at(1000.5, 0, 1000, &c)];
    let mut env = EdgeEnv::scripted(c, cluster, tasks);
    env.reset(0);
    env.step(0);
    assert_eq!(env.servers()[0].load(), 0);
    assert!(!env.step(0).info.crashed);
}

#[test]
fn task_budget_ends_episode() {
    let config = ClusterConfig {
        task_budget: 7,
        ..Default::default()
    };
    let mut env = EdgeEnv::new(config.clone(), make_cluster(&config, 0));
    env.reset(5);
    let mut n = 0;
    while !env.is_done() {
        env.step(n % 20);
        n += 1;
    }
    assert_eq!(n, 7);
}
