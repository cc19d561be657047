//! Reverse diffusion chain used as a stochastic discrete-action policy.

mod chain;
mod predictor;
mod schedule;

pub use chain::{argmax, chain_logits, policy_entropy, sample_policy, sample_policy_batch, ChainNoise, PolicyOutput};
pub use predictor::{predict_noise, NoisePredictor, PredictorArch, PredictorConfig, StateContext};
pub use schedule::{build_schedule, denoise_step, NoiseSchedule, SamplingVariance};
