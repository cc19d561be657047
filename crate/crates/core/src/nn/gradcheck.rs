//! Central finite-difference verification of graph gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamSet, Var};

/// Largest discrepancy found by [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per parameter name.
    pub per_param: Vec<(String, f64)>,
    pub coordinates_checked: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Relative error with the floor used throughout the checks.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of the scalar built by `f` against central
/// differences on up to `per_param` coordinates of every parameter (chosen
/// with `seed`).
///
/// The numeric side combines central differences at `h` and `h / 2` by
/// Richardson extrapolation, with every ReLU held at its activation pattern
/// at the unperturbed point. Plain central differences lose about
/// `eps * |f| / h` to rounding, which swamps gradient entries near 1e-9.
pub fn grad_check<F>(params: &ParamSet, f: F, h: f64, per_param: usize, seed: u64) -> GradCheckReport
where
    F: for<'g> Fn(&mut Graph<'g>, &'g ParamSet) -> Var,
{
    grad_check_with(params, f, h, per_param, seed, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradients before
/// they are compared. Used to confirm that the check notices wrong ones.
pub fn grad_check_with<F>(
    params: &ParamSet,
    f: F,
    h: f64,
    per_param: usize,
    seed: u64,
    tamper: impl FnOnce(&mut ParamSet),
) -> GradCheckReport
where
    F: for<'g> Fn(&mut Graph<'g>, &'g ParamSet) -> Var,
{
    let mut analytic = params.clone();
    analytic.zero_grads();
    let (grads, masks) = {
        let mut g = Graph::new();
        let out = f(&mut g, &analytic);
        assert_eq!(g.value(out).shape(), (1, 1), "grad_check needs a scalar output");
        (g.backward(out), g.relu_masks())
    };
    grads.accumulate_into(&mut analytic);
    tamper(&mut analytic);

    let eval = |ps: &ParamSet| -> f64 {
        let mut g = Graph::with_frozen_relu(masks.clone());
        let out = f(&mut g, ps);
        g.value(out).get(0, 0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: Vec::new(),
        coordinates_checked: 0,
    };
    for id in params.ids() {
        let n = params.value(id).len();
        if n == 0 {
            continue;
        }
        let picks = sample(&mut rng, n, per_param.min(n));
        let mut worst = 0.0f64;
        for k in picks.iter() {
            let orig = params.value(id).as_slice()[k];
            let mut central = |step: f64| {
                probe.value_mut(id).as_mut_slice()[k] = orig + step;
                let up = eval(&probe);
                probe.value_mut(id).as_mut_slice()[k] = orig - step;
                let down = eval(&probe);
                probe.value_mut(id).as_mut_slice()[k] = orig;
                (up - down) / (2.0 * step)
            };
            let coarse = central(h);
            let fine = central(h / 2.0);
            let numeric = (4.0 * fine - coarse) / 3.0;
            let err = relative_error(analytic.grad(id).as_slice()[k], numeric);
            worst = worst.max(err);
            report.coordinates_checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push((params.name(id).to_owned(), worst));
    }
    report
}
