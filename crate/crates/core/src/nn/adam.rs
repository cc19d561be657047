use super::{Matrix, ParamSet};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer state for one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct OptState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update using the gradients currently stored in
/// `params`, which are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, opt: &mut OptState) {
    assert_eq!(params.len(), opt.m.len(), "optimizer/parameter count mismatch");
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let grad = params.grad(id).clone();
        let (m, v) = (&mut opt.m[i], &mut opt.v[i]);
        assert_eq!(m.shape(), grad.shape(), "moment shape mismatch");
        let value = params.value_mut(id);
        for (((p, g), m), v) in value
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
    params.zero_grads();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> (ParamSet, super::super::ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Matrix::from_vec(1, 1, vec![v]));
        (ps, id)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut ps, id) = scalar(0.75);
        let mut opt = OptState::new(&ps, 0.1);
        for _ in 0..10 {
            adam_step(&mut ps, &mut opt);
        }
        assert_eq!(ps.value(id).get(0, 0), 0.75);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.02] {
            let (mut ps, id) = scalar(0.0);
            let mut opt = OptState::new(&ps, 0.1);
            ps.grad_mut(id).set(0, 0, g);
            adam_step(&mut ps, &mut opt);
            // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
            let expect = -0.1 * g / (g.abs() + 1e-8);
            assert!((ps.value(id).get(0, 0) - expect).abs() < 1e-15);
            assert!((ps.value(id).get(0, 0) + 0.1 * g.signum()).abs() < 1e-6);
            assert_eq!(ps.grad(id).get(0, 0), 0.0);
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr_sign() {
        // scalar recurrence oracle for the moments
        let (g, lr) = (0.4, 0.01);
        let (mut ps, id) = scalar(1.0);
        let mut opt = OptState::new(&ps, lr);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut prev = 1.0;
        for t in 1..=500 {
            ps.grad_mut(id).set(0, 0, g);
            adam_step(&mut ps, &mut opt);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let oracle = lr * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            let now = ps.value(id).get(0, 0);
            assert!(((prev - now) - oracle).abs() < 1e-12);
            assert!(((prev - now) - lr).abs() < 1e-7);
            prev = now;
        }
        assert_eq!(opt.steps_taken(), 500);
    }
}
