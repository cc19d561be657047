//! Runs the reverse denoising chain of an untrained attention predictor on
//! one observation and prints how the action logits evolve.
//!
//!     cargo run --release --example diffusion_chain

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adsac::diffusion::{
    build_schedule, denoise_step, policy_entropy, predict_noise, NoisePredictor, PolicyOutput, PredictorArch,
    PredictorConfig, SamplingVariance,
};
use adsac::nn::ParamSet;

fn main() {
    let sched = build_schedule(5, 0.05, 0.5, SamplingVariance::Beta).unwrap();
    println!(" t   beta    alpha_bar  sigma");
    for t in 1..=sched.steps() {
        println!("{t:>2}  {:.4}  {:.6}   {:.4}", sched.beta(t), sched.alpha_bar(t), sched.sigma(t));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::new();
    let predictor = NoisePredictor::new(PredictorConfig::new(PredictorArch::Attention, 21, 20), &mut ps, &mut rng);
    println!("{} parameters", ps.scalar_count());

    let state: Vec<f64> = (0..21).map(|_| rng.gen_range(0.0..1.0)).collect();
    let normal = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..20).map(|_| rng.sample(rand_distr::StandardNormal)).collect() };
    let mut x = normal(&mut rng);
    for t in (1..=sched.steps()).rev() {
        let eps = predict_noise(&predictor, &ps, &x, t, &state, sched.steps());
        let z = normal(&mut rng);
        x = denoise_step(&x, t, &eps, &sched, &z);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("after step {t}: |x| = {norm:.3}");
    }
    let out = PolicyOutput::from_logits(x);
    println!(
        "argmax {} with p = {:.3}; entropy {:.3} (uniform {:.3})",
        out.argmax(),
        out.probs[out.argmax()],
        policy_entropy(&out.probs),
        (20f64).ln()
    );
}
