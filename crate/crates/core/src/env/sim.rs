use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::task::progress;
use super::{next_interarrival, spawn_task, utility, Cluster, ClusterConfig, Task};

/// A task currently holding resources on a server.
#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub task_id: u64,
    pub demand: u32,
    pub start_time: f64,
    pub duration: f64,
    /// Utility credited when the task was committed.
    pub utility: f64,
}

/// Runtime state of one edge server.
#[derive(Debug, Clone, PartialEq)]
pub struct Server {
    pub server_id: usize,
    pub capacity: u32,
    pub in_flight: Vec<InFlight>,
}

impl Server {
    pub fn load(&self) -> u32 {
        self.in_flight.iter().map(|t| t.demand).sum()
    }

    pub fn remaining_fraction(&self) -> f64 {
        f64::from(self.capacity.saturating_sub(self.load())) / f64::from(self.capacity)
    }

    pub fn fits(&self, demand: u32) -> bool {
        self.load() + demand <= self.capacity
    }
}

/// Crash penalty `p * (1 + sum(1 - G))` over the tasks in flight on `server`.
pub fn penalty(server: &Server, now: f64, config: &ClusterConfig) -> f64 {
    let unfinished: f64 = server
        .in_flight
        .iter()
        .map(|t| 1.0 - progress(t.start_time, t.duration, now))
        .sum();
    config.penalty_p * (1.0 + unfinished)
}

/// Per-episode counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsAccumulator {
    /// Tasks that arrived and received a decision.
    pub total_tasks: u64,
    /// Crash-triggering tasks plus every in-flight task a crash destroyed.
    pub crashed_tasks: u64,
    /// Committed tasks that have not been destroyed by a crash.
    pub surviving_tasks: u64,
    pub crash_events: u64,
    pub cumulative_reward: f64,
    pub lost_utility: f64,
    /// Utility credited at commit time, including tasks later destroyed.
    pub utility_earned: f64,
    pub penalty_total: f64,
}

impl MetricsAccumulator {
    pub fn crash_rate(&self) -> f64 {
        if self.total_tasks == 0 {
            0.0
        } else {
            self.crashed_tasks as f64 / self.total_tasks as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub crashed: bool,
    /// In-flight tasks destroyed by this step's crash (the triggering task
    /// is not included).
    pub n_terminated: usize,
    pub utility_earned: f64,
    pub utility_lost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// One decision recorded for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub time: f64,
    pub task_id: u64,
    pub ttype: usize,
    pub demand: u32,
    pub action: usize,
    pub reward: f64,
    pub crashed: bool,
    /// Committed demand per server right after the decision.
    pub server_loads: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Completion { server: usize },
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    task_id: u64,
    kind: EventKind,
}

impl Event {
    fn rank(&self) -> u8 {
        match self.kind {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival => 1,
        }
    }
}

impl Eq for Event {}

impl Ord for Event {
    // Min-heap order: earliest time, completions before arrivals, lowest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.rank().cmp(&self.rank()))
            .then_with(|| other.task_id.cmp(&self.task_id))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Arrivals {
    Poisson(ChaCha8Rng),
    Scripted { script: Vec<Task>, queue: VecDeque<Task> },
}

/// Discrete-event simulation of task assignment on an edge cluster.
///
/// At any decision point exactly one arrived task is pending. [`step`]
/// assigns it to a model, then advances the clock through completions until
/// the next arrival (or the horizon).
///
/// [`step`]: EdgeEnv::step
#[derive(Debug, Clone)]
pub struct EdgeEnv {
    config: ClusterConfig,
    cluster: Cluster,
    servers: Vec<Server>,
    clock: f64,
    events: BinaryHeap<Event>,
    arrivals: Arrivals,
    upcoming: Option<Task>,
    pending: Option<Task>,
    spawned: u64,
    steps: u64,
    done: bool,
    metrics: MetricsAccumulator,
    trace: Option<Vec<TraceRow>>,
}

impl EdgeEnv {
    /// Poisson-arrival environment; call [`reset`](Self::reset) before use.
    pub fn new(config: ClusterConfig, cluster: Cluster) -> Self {
        Self::build(config, cluster, Arrivals::Poisson(ChaCha8Rng::seed_from_u64(0)))
    }

    /// Environment whose arrivals are a fixed list of tasks (sorted by
    /// arrival time). Only `ttype`, `demand`, `arrival_time` and `duration`
    /// of the scripted tasks are used.
    pub fn scripted(config: ClusterConfig, cluster: Cluster, mut tasks: Vec<Task>) -> Self {
        tasks.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        let arrivals = Arrivals::Scripted {
            queue: tasks.iter().cloned().collect(),
            script: tasks,
        };
        Self::build(config, cluster, arrivals)
    }

    fn build(config: ClusterConfig, cluster: Cluster, arrivals: Arrivals) -> Self {
        config.validate().expect("invalid cluster configuration");
        cluster.check_against(&config).expect("cluster does not match configuration");
        let servers = cluster
            .servers
            .iter()
            .map(|s| Server {
                server_id: s.server_id,
                capacity: s.capacity,
                in_flight: Vec::new(),
            })
            .collect();
        let mut env = Self {
            config,
            cluster,
            servers,
            clock: 0.0,
            events: BinaryHeap::new(),
            arrivals,
            upcoming: None,
            pending: None,
            spawned: 0,
            steps: 0,
            done: true,
            metrics: MetricsAccumulator::default(),
            trace: None,
        };
        env.reset(0);
        env
    }

    /// Starts a fresh episode: empty servers, clock 0, new arrival stream
    /// drawn from `seed` (ignored for scripted arrivals).
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        for s in &mut self.servers {
            s.in_flight.clear();
        }
        self.clock = 0.0;
        self.events.clear();
        self.arrivals = match std::mem::replace(&mut self.arrivals, Arrivals::Poisson(ChaCha8Rng::seed_from_u64(0))) {
            Arrivals::Poisson(_) => Arrivals::Poisson(ChaCha8Rng::seed_from_u64(seed)),
            Arrivals::Scripted { script, .. } => Arrivals::Scripted {
                queue: script.iter().cloned().collect(),
                script,
            },
        };
        self.upcoming = None;
        self.pending = None;
        self.spawned = 0;
        self.steps = 0;
        self.done = false;
        self.metrics = MetricsAccumulator::default();
        if let Some(t) = &mut self.trace {
            t.clear();
        }
        self.schedule_next_arrival();
        self.advance();
        self.encode_state()
    }

    /// Records a [`TraceRow`] for every subsequent step.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn pending(&self) -> Option<&Task> {
        self.pending.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn n_actions(&self) -> usize {
        self.cluster.n_models()
    }

    pub fn state_dim(&self) -> usize {
        self.config.state_dim()
    }

    /// Observation for the pending task (task fields zero when none).
    pub fn encode_state(&self) -> Vec<f64> {
        encode_state(&self.config, &self.cluster, &self.servers, self.pending.as_ref())
    }

    /// `true` for every model whose server can take the pending task
    /// without exceeding its capacity.
    pub fn feasible_actions(&self) -> Vec<bool> {
        let demand = self
            .pending
            .as_ref()
            .expect("feasible_actions needs a pending task")
            .demand;
        (0..self.cluster.n_models())
            .map(|m| self.servers[self.cluster.server_of(m)].fits(demand))
            .collect()
    }

    /// Utility the pending task would earn on `model`.
    pub fn utility_of(&self, model: usize) -> f64 {
        let task = self.pending.as_ref().expect("no pending task");
        utility(&self.cluster.models[model], task, &self.config)
    }

    pub fn step(&mut self, action: usize) -> StepOutcome {
        assert!(!self.done, "step called after the episode ended");
        assert!(
            action < self.cluster.n_models(),
            "action {action} out of range for {} models",
            self.cluster.n_models()
        );
        let mut task = self.pending.take().expect("no pending task");
        let now = self.clock;
        let server_id = self.cluster.server_of(action);
        let u = utility(&self.cluster.models[action], &task, &self.config);
        let mut info = StepInfo::default();
        self.metrics.total_tasks += 1;

        let reward = if self.servers[server_id].fits(task.demand) {
            task.server_assigned = Some(server_id);
            task.model_assigned = Some(action);
            task.start_time = Some(now);
            self.servers[server_id].in_flight.push(InFlight {
                task_id: task.id,
                demand: task.demand,
                start_time: now,
                duration: task.duration,
                utility: u,
            });
            self.events.push(Event {
                time: now + task.duration,
                task_id: task.id,
                kind: EventKind::Completion { server: server_id },
            });
            self.metrics.surviving_tasks += 1;
            self.metrics.utility_earned += u;
            info.utility_earned = u;
            u
        } else {
            let pen = penalty(&self.servers[server_id], now, &self.config);
            let dropped = std::mem::take(&mut self.servers[server_id].in_flight);
            let lost = dropped.iter().map(|t| t.utility).sum::<f64>() + u;
            info.crashed = true;
            info.n_terminated = dropped.len();
            info.utility_lost = lost;
            self.metrics.crash_events += 1;
            self.metrics.crashed_tasks += 1 + dropped.len() as u64;
            self.metrics.surviving_tasks -= dropped.len() as u64;
            self.metrics.lost_utility += lost;
            self.metrics.penalty_total += pen;
            -pen
        };
        self.metrics.cumulative_reward += reward;

        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                step: self.steps,
                time: now,
                task_id: task.id,
                ttype: task.ttype.0,
                demand: task.demand,
                action,
                reward,
                crashed: info.crashed,
                server_loads: self.servers.iter().map(Server::load).collect(),
            });
        }
        self.steps += 1;

        self.schedule_next_arrival();
        self.advance();
        StepOutcome {
            reward,
            next_state: self.encode_state(),
            done: self.done,
            info,
        }
    }

    fn schedule_next_arrival(&mut self) {
        debug_assert!(self.upcoming.is_none());
        if self.config.task_budget > 0 && self.spawned >= self.config.task_budget {
            return;
        }
        let id = self.spawned;
        let task = match &mut self.arrivals {
            Arrivals::Poisson(rng) => {
                let gap = next_interarrival(rng, self.config.lambda).expect("validated lambda");
                let at = self.clock + gap;
                if at >= self.config.horizon {
                    return;
                }
                spawn_task(rng, &self.config, id, at)
            }
            Arrivals::Scripted { queue, .. } => match queue.pop_front() {
                Some(t) if t.arrival_time < self.config.horizon => Task {
                    id,
                    server_assigned: None,
                    model_assigned: None,
                    start_time: None,
                    ..t
                },
                _ => return,
            },
        };
        self.spawned += 1;
        self.events.push(Event {
            time: task.arrival_time,
            task_id: task.id,
            kind: EventKind::Arrival,
        });
        self.upcoming = Some(task);
    }

    /// Processes events until the next arrival becomes pending, or until
    /// the horizon when no arrival remains.
    fn advance(&mut self) {
        while let Some(ev) = self.events.peek().copied() {
            if self.upcoming.is_none() && ev.time > self.config.horizon {
                break;
            }
            self.events.pop();
            self.clock = ev.time;
            match ev.kind {
                EventKind::Completion { server } => {
                    let s = &mut self.servers[server];
                    // tasks destroyed by a crash leave stale completion events
                    if let Some(pos) = s.in_flight.iter().position(|t| t.task_id == ev.task_id) {
                        s.in_flight.remove(pos);
                    }
                }
                EventKind::Arrival => {
                    self.pending = self.upcoming.take();
                    return;
                }
            }
        }
        self.clock = self.config.horizon;
        self.done = true;
    }
}

/// Observation layout: `one_hot(type)`, `demand / demand_max`,
/// `duration / (demand_max * duration_per_step)`, then per server
/// `capacity / capacity_max`, remaining fraction, `models / models_per_server`.
pub fn encode_state(config: &ClusterConfig, cluster: &Cluster, servers: &[Server], task: Option<&Task>) -> Vec<f64> {
    let mut s = Vec::with_capacity(config.state_dim());
    let dmax = f64::from(config.demand_range[1]);
    match task {
        Some(t) => {
            s.extend((0..config.k_types).map(|k| if k == t.ttype.0 { 1.0 } else { 0.0 }));
            s.push(f64::from(t.demand) / dmax);
            s.push((t.duration / (dmax * config.duration_per_step)).min(1.0));
        }
        None => s.extend(std::iter::repeat(0.0).take(config.k_types + 2)),
    }
    let cmax = f64::from(config.capacity_range[1]);
    for srv in servers {
        s.push(f64::from(srv.capacity) / cmax);
        s.push(srv.remaining_fraction());
        s.push(cluster.models_on(srv.server_id) as f64 / config.models_per_server as f64);
    }
    s
}
