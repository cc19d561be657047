//! Small dense-network toolkit: matrices, a recorded computation graph with
//! reverse-mode gradients, Adam, and parameter checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod matrix;
pub mod ops;
mod params;

pub use adam::{adam_step, OptState};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, Linear, Mlp};
pub use matrix::Matrix;
pub use params::{ParamId, ParamSet};
