pub mod baselines;
pub mod diffusion;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod sac;

pub use error::{Error, Result};
