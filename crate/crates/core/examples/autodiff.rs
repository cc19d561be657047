//! Fits a two-layer network to a noisy sine with the recorded graph and
//! Adam, then checks its gradients against finite differences.
//!
//!     cargo run --release --example autodiff

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adsac::nn::{adam_step, grad_check, Activation, Graph, Matrix, Mlp, OptState, ParamSet, Var};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs: Vec<f64> = (0..64).map(|i| -3.0 + 6.0 * i as f64 / 63.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin() + rng.gen_range(-0.05..0.05)).collect();
    let x = Matrix::from_vec(64, 1, xs);
    let y = Matrix::from_vec(64, 1, ys);

    let mut ps = ParamSet::new();
    let net = Mlp::new(&mut ps, "f", &[1, 32, 32, 1], Activation::Identity, &mut rng);
    let mut opt = OptState::new(&ps, 1e-2);

    for step in 0..=1500 {
        let value = {
            let mut g = Graph::new();
            let l = mse(&mut g, &ps, &net, &x, &y);
            let grads = g.backward(l);
            let value = g.value(l).get(0, 0);
            grads.accumulate_into(&mut ps);
            value
        };
        adam_step(&mut ps, &mut opt);
        if step % 300 == 0 {
            println!("step {step:>4}  mse {value:.5}");
        }
    }

    let report = grad_check(&ps, |g, ps| mse(g, ps, &net, &x, &y), 1e-3, 5, 1);
    println!(
        "gradient check: {} coordinates, max relative error {:.2e}",
        report.coordinates_checked, report.max_rel_error
    );
}

fn mse<'a>(g: &mut Graph<'a>, ps: &'a ParamSet, net: &Mlp, x: &Matrix, y: &Matrix) -> Var {
    let xv = g.input(x.clone());
    let pred = net.forward(g, ps, xv);
    let target = g.input(y.clone());
    let diff = g.sub(pred, target);
    let sq = g.square(diff);
    g.mean(sq)
}
