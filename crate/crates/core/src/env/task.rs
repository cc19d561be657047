use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{ClusterConfig, TaskType};
use crate::error::{Error, Result};

/// A content-generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub ttype: TaskType,
    /// Requested denoising steps.
    pub demand: u32,
    pub arrival_time: f64,
    pub duration: f64,
    pub server_assigned: Option<usize>,
    pub model_assigned: Option<usize>,
    /// Service start; set when the task is committed to a server.
    pub start_time: Option<f64>,
}

impl Task {
    pub fn new(id: u64, ttype: TaskType, demand: u32, arrival_time: f64, config: &ClusterConfig) -> Self {
        Self {
            id,
            ttype,
            demand,
            arrival_time,
            duration: config.duration_per_step * f64::from(demand),
            server_assigned: None,
            model_assigned: None,
            start_time: None,
        }
    }
}

/// Exponential inter-arrival time with mean `1 / lambda`.
pub fn next_interarrival(rng: &mut impl Rng, lambda: f64) -> Result<f64> {
    let exp = Exp::new(lambda)
        .ok()
        .filter(|_| lambda > 0.0)
        .ok_or_else(|| Error::InvalidConfig(format!("arrival rate must be positive, got {lambda}")))?;
    Ok(exp.sample(rng))
}

/// Draws a task type uniformly and a demand uniformly from `demand_range`.
pub fn spawn_task(rng: &mut impl Rng, config: &ClusterConfig, id: u64, now: f64) -> Task {
    debug_assert!(now < config.horizon, "spawning past the horizon");
    let ttype = TaskType(rng.gen_range(0..config.k_types));
    let [lo, hi] = config.demand_range;
    let demand = rng.gen_range(lo..=hi);
    Task::new(id, ttype, demand, now, config)
}

/// Completion fraction of an assigned task, clamped to `[0, 1]`.
pub fn task_progress(task: &Task, now: f64) -> f64 {
    let start = task
        .start_time
        .expect("task_progress called on a task that was never assigned");
    progress(start, task.duration, now)
}

pub(crate) fn progress(start: f64, duration: f64, now: f64) -> f64 {
    ((now - start) / duration).clamp(0.0, 1.0)
}
