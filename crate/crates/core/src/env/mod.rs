//! Edge-cluster simulation: arrivals, resource accounting, utility rewards
//! and crash penalties.

mod cluster;
mod config;
mod sim;
mod task;
mod trace;

pub use cluster::{make_cluster, utility, Cluster, ModelProfile, ServerSpec, TaskType};
pub use config::ClusterConfig;
pub use sim::{
    encode_state, penalty, EdgeEnv, InFlight, MetricsAccumulator, Server, StepInfo, StepOutcome, TraceRow,
};
pub use task::{next_interarrival, spawn_task, task_progress, Task};
pub use trace::write_trace_csv;

#[cfg(test)]
mod tests;
