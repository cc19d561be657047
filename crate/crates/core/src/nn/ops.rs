//! Graph-free numeric kernels shared by the forward passes and the tests.

use super::Matrix;
use crate::error::{Error, Result};

/// `W x + b` for a single input vector, with `W: out x in`.
pub fn linear_forward(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols(), x.len(), "linear_forward: input width mismatch");
    assert_eq!(w.rows(), b.len(), "linear_forward: bias length mismatch");
    (0..w.rows())
        .map(|r| b[r] + w.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| v - lse).collect()
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&softmax(m.row(r)));
    }
    out
}

pub fn log_softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&log_softmax(m.row(r)));
    }
    out
}

/// Transformer-style timestep embedding: entry `2i` is `sin(t / 10000^(2i/d))`
/// and entry `2i+1` the matching cosine.
pub fn sinusoidal_embed(t: usize, d: usize) -> Result<Vec<f64>> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "sinusoidal embedding dimension must be even and positive, got {d}"
        )));
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / d as f64);
        let angle = t as f64 / freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V` over one
/// token sequence, softmax taken row-wise.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
    assert_eq!(q.cols(), k.cols(), "attention: query/key width mismatch");
    assert_eq!(k.rows(), v.rows(), "attention: key/value count mismatch");
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let scores = q.matmul(&k.transpose()).map(|s| s * scale);
    softmax_rows(&scores).matmul(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_identity_and_bias_only() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(linear_forward(&Matrix::identity(3), &[0.0; 3], &x), x.to_vec());
        let c = [1.5, -2.0];
        assert_eq!(linear_forward(&Matrix::zeros(2, 3), &c, &x), c.to_vec());
    }

    #[test]
    fn linear_matches_triple_loop() {
        let w = Matrix::from_vec(4, 3, (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.31).collect());
        let b = [0.1, -0.2, 0.3, -0.4];
        let x = [0.7, -0.5, 1.9];
        let got = linear_forward(&w, &b, &x);
        for (r, g) in got.iter().enumerate() {
            let mut acc = b[r];
            for c in 0..3 {
                acc += w.get(r, c) * x[c];
            }
            assert!((g - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-300);
        let p = softmax(&[1.0, 2.0, 3.0]);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (i, v) in p.iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoidal_cases() {
        let e = sinusoidal_embed(0, 8).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
        let e = sinusoidal_embed(1, 2).unwrap();
        assert!((e[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!((e[1] - 0.540_302_305_868_139_8).abs() < 1e-15);
        assert!(sinusoidal_embed(3, 7).is_err());
    }

    #[test]
    fn attention_single_token_is_value() {
        let q = Matrix::from_vec(1, 4, vec![0.3, -2.0, 1.0, 0.5]);
        let k = Matrix::from_vec(1, 4, vec![1.0, 1.0, -1.0, 2.0]);
        let v = Matrix::from_vec(1, 4, vec![9.0, -8.0, 7.0, 0.25]);
        assert_eq!(attention(&q, &k, &v), v);
    }

    #[test]
    fn attention_uniform_scores_average_values() {
        let q = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let k = Matrix::from_vec(3, 2, vec![0.0, 1.0, 0.0, -3.0, 0.0, 2.5]);
        let v = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        let out = attention(&q, &k, &v);
        for r in 0..2 {
            assert!((out.get(r, 0) - 3.0).abs() < 1e-12);
            assert!((out.get(r, 1) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_matches_loop_oracle() {
        let gen = |n: usize, seed: f64| (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect();
        let q = Matrix::from_vec(3, 4, gen(12, 0.73));
        let k = Matrix::from_vec(3, 4, gen(12, 1.31));
        let v = Matrix::from_vec(3, 4, gen(12, 2.17));
        let out = attention(&q, &k, &v);
        for i in 0..3 {
            let mut scores = [0.0; 3];
            for j in 0..3 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += q.get(i, d) * k.get(j, d);
                }
                scores[j] = s / 2.0;
            }
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = w.iter().sum();
            for d in 0..4 {
                let expect: f64 = (0..3).map(|j| w[j] / z * v.get(j, d)).sum();
                assert!((out.get(i, d) - expect).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            x in prop::collection::vec(-50.0f64..50.0, 1..30),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&x);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn sinusoidal_entries_bounded(t in 0usize..100_000, half in 1usize..16) {
            for v in sinusoidal_embed(t, 2 * half).unwrap() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
