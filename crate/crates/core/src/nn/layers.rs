use rand::Rng;

use super::{Graph, Matrix, ParamId, ParamSet, Var};

/// Affine layer `y = x W^T + b` whose weights live in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialization for weights and bias.
    pub fn new(ps: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
        let w = ps.add(format!("{name}.w"), Matrix::from_vec(outputs, inputs, draw(outputs * inputs)));
        let b = Some(ps.add(format!("{name}.b"), Matrix::from_vec(1, outputs, draw(outputs))));
        Self { w, b, inputs, outputs }
    }

    /// Weight matrix only, `y = x W^T`.
    pub fn without_bias(ps: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let data = (0..outputs * inputs).map(|_| rng.gen_range(-bound..bound)).collect();
        let w = ps.add(format!("{name}.w"), Matrix::from_vec(outputs, inputs, data));
        Self { w, b: None, inputs, outputs }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, ps: &'a ParamSet, x: Var) -> Var {
        let w = g.param(ps, self.w);
        let b = self.b.map(|b| g.param(ps, b));
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Stack of [`Linear`] layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output: Activation,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`.
    pub fn new(ps: &mut ParamSet, name: &str, dims: &[usize], output: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(ps, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, ps: &'a ParamSet, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, ps, x);
            if i < last || self.output == Activation::Relu {
                x = g.relu(x);
            }
        }
        x
    }
}
