use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{ops::sinusoidal_embed, Activation, Graph, Linear, Matrix, Mlp, ParamSet, Var};

/// Noise-predictor backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorArch {
    /// Three feature tokens (noisy action, state, timestep) mixed by
    /// scaled dot-product self-attention before decoding.
    Attention,
    /// Concatenated features decoded directly by an MLP.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub arch: PredictorArch,
    pub action_dim: usize,
    pub state_dim: usize,
    pub x_feature: usize,
    pub state_feature: usize,
    pub time_dim: usize,
    pub attn_dim: usize,
    pub hidden: usize,
}

impl PredictorConfig {
    pub fn new(arch: PredictorArch, state_dim: usize, action_dim: usize) -> Self {
        Self {
            arch,
            action_dim,
            state_dim,
            x_feature: 32,
            state_feature: 64,
            time_dim: 16,
            attn_dim: 32,
            hidden: 256,
        }
    }
}

#[derive(Debug, Clone)]
struct AttentionBlock {
    x_token: Linear,
    s_token: Linear,
    t_token: Linear,
    wq: Linear,
    wk: Linear,
    wv: Linear,
}

/// Layout of the noise-prediction network `eps(x_t, t, s)`; the weights
/// themselves live in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct NoisePredictor {
    pub config: PredictorConfig,
    x_enc: Mlp,
    s_enc: Mlp,
    attention: Option<AttentionBlock>,
    decoder: Mlp,
}

/// Per-state quantities that do not depend on the timestep.
#[derive(Debug, Clone, Copy)]
pub struct StateContext {
    /// `B x state_feature` for the MLP backbone, `B x attn_dim` token for
    /// the attention backbone.
    features: Var,
    batch: usize,
}

impl NoisePredictor {
    pub fn new(config: PredictorConfig, ps: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let c = &config;
        let x_enc = Mlp::new(ps, "x_enc", &[c.action_dim, c.x_feature, c.x_feature], Activation::Relu, rng);
        let s_enc = Mlp::new(ps, "s_enc", &[c.state_dim, c.state_feature, c.state_feature], Activation::Relu, rng);
        let (attention, decoder_in) = match c.arch {
            PredictorArch::Attention => {
                let d = c.attn_dim;
                let block = AttentionBlock {
                    x_token: Linear::new(ps, "tok_x", c.x_feature, d, rng),
                    s_token: Linear::new(ps, "tok_s", c.state_feature, d, rng),
                    t_token: Linear::new(ps, "tok_t", c.time_dim, d, rng),
                    wq: Linear::without_bias(ps, "attn_q", d, d, rng),
                    wk: Linear::without_bias(ps, "attn_k", d, d, rng),
                    wv: Linear::without_bias(ps, "attn_v", d, d, rng),
                };
                (Some(block), 3 * d)
            }
            PredictorArch::Mlp => (None, c.x_feature + c.state_feature + c.time_dim),
        };
        let decoder = Mlp::new(ps, "dec", &[decoder_in, c.hidden, c.action_dim], Activation::Identity, rng);
        Self {
            config,
            x_enc,
            s_enc,
            attention,
            decoder,
        }
    }

    pub fn encode_state<'a>(&self, g: &mut Graph<'a>, ps: &'a ParamSet, states: Var) -> StateContext {
        let batch = g.value(states).rows();
        let feat = self.s_enc.forward(g, ps, states);
        let features = match &self.attention {
            Some(block) => block.s_token.forward(g, ps, feat),
            None => feat,
        };
        StateContext { features, batch }
    }

    /// Predicted noise for a batch of `x_t` (`B x action_dim`) at timestep `t`.
    pub fn predict<'a>(&self, g: &mut Graph<'a>, ps: &'a ParamSet, x_t: Var, t: usize, ctx: &StateContext) -> Var {
        let c = &self.config;
        let batch = ctx.batch;
        let emb = sinusoidal_embed(t, c.time_dim).expect("time_dim is even");
        let mut t_rows = Matrix::zeros(batch, c.time_dim);
        for r in 0..batch {
            t_rows.row_mut(r).copy_from_slice(&emb);
        }
        let t_in = g.input(t_rows);
        let x_feat = self.x_enc.forward(g, ps, x_t);
        let features = match &self.attention {
            Some(block) => {
                let d = c.attn_dim;
                let xt = block.x_token.forward(g, ps, x_feat);
                let tt = block.t_token.forward(g, ps, t_in);
                // row b of the concat is tokens 3b, 3b+1, 3b+2 after reshaping
                let joined = g.concat_cols(&[xt, ctx.features, tt]);
                let tokens = g.reshape(joined, 3 * batch, d);
                let q = block.wq.forward(g, ps, tokens);
                let k = block.wk.forward(g, ps, tokens);
                let v = block.wv.forward(g, ps, tokens);
                let scores = g.group_scores(q, k, 3, 1.0 / (d as f64).sqrt());
                let weights = g.softmax_rows(scores);
                let mixed = g.group_mix(weights, v, 3);
                g.reshape(mixed, batch, 3 * d)
            }
            None => g.concat_cols(&[x_feat, ctx.features, t_in]),
        };
        self.decoder.forward(g, ps, features)
    }
}

/// Single-sample convenience wrapper around [`NoisePredictor::predict`].
pub fn predict_noise(predictor: &NoisePredictor, ps: &ParamSet, x_t: &[f64], t: usize, state: &[f64], steps: usize) -> Vec<f64> {
    assert!((1..=steps).contains(&t), "timestep {t} out of range 1..={steps}");
    let mut g = Graph::new();
    let s = g.input(Matrix::row_vector(state));
    let ctx = predictor.encode_state(&mut g, ps, s);
    let x = g.input(Matrix::row_vector(x_t));
    let out = predictor.predict(&mut g, ps, x, t, &ctx);
    g.value(out).as_slice().to_vec()
}
