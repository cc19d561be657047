//! Reverse-mode differentiation over a dynamically recorded graph of matrix
//! operations.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! walks the nodes in reverse insertion order, which is a valid topological
//! order because a node can only reference nodes recorded before it.
//! Parameters enter the graph by reference through [`Graph::param`], so a
//! forward pass never copies weights.

use std::borrow::Cow;

use super::matrix::gemm;
use super::{Matrix, ParamId, ParamSet};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { set: u64, id: ParamId },
    /// `x W^T + b`
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    /// `ca * a + cb * b`
    Axpby { ca: f64, a: Var, cb: f64, b: Var },
    Scale { a: Var, c: f64 },
    AddConst { a: Var },
    Mul { a: Var, b: Var },
    Square { a: Var },
    Relu { a: Var },
    SoftmaxRows { a: Var },
    LogSoftmaxRows { a: Var },
    SumCols { a: Var },
    Mean { a: Var },
    Reshape { a: Var },
    ConcatCols { parts: Vec<Var> },
    GatherCols { a: Var, idx: Vec<usize> },
    /// Per-group `scale * Q_g K_g^T` for consecutive groups of `n` rows.
    GroupScores { q: Var, k: Var, n: usize, scale: f64 },
    /// Per-group `P_g V_g`.
    GroupMix { p: Var, v: Var, n: usize },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

/// A recorded forward computation.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    /// When set, the k-th `relu` multiplies by the k-th mask instead of
    /// thresholding its own input.
    frozen_relu: Option<Vec<Matrix>>,
    relu_calls: usize,
}

/// Gradients of one scalar output with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(usize, u64, ParamId)>,
}

impl Gradients {
    /// Gradient of the output w.r.t. `v`, or `None` if `v` does not reach it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Adds the gradients of every parameter of `params` that was bound in the
    /// graph into its gradient slot. Parameters that were never reached keep
    /// their current slot value.
    pub fn accumulate_into(&self, params: &mut ParamSet) {
        let uid = params.uid();
        for &(node, set, id) in &self.params {
            if set != uid {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                params.grad_mut(id).add_scaled(1.0, g);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(existing) => existing.add_scaled(1.0, &delta),
        None => *slot = Some(delta),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            frozen_relu: None,
            relu_calls: 0,
        }
    }

    /// A graph whose ReLUs replay the activation pattern `masks`, as
    /// returned by [`Graph::relu_masks`] on a graph of identical structure.
    /// Forward values are then smooth in the inputs, which keeps finite
    /// differences from straddling a kink.
    pub(crate) fn with_frozen_relu(masks: Vec<Matrix>) -> Self {
        Self {
            frozen_relu: Some(masks),
            ..Self::new()
        }
    }

    /// 0/1 activation pattern of every `relu` node, in recording order.
    pub(crate) fn relu_masks(&self) -> Vec<Matrix> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu { a } => Some(self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 })),
                _ => None,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Constant leaf (no gradient is propagated past it, but one is recorded).
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(Cow::Owned(m), Op::Input)
    }

    /// Borrowed parameter leaf.
    pub fn param(&mut self, params: &'a ParamSet, id: ParamId) -> Var {
        self.push(
            Cow::Borrowed(params.value(id)),
            Op::Param {
                set: params.uid(),
                id,
            },
        )
    }

    /// `x W^T + b` with `x: B x in`, `W: out x in`, `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(
            xv.cols(),
            wv.cols(),
            "linear: input width {} vs weight {}x{}",
            xv.cols(),
            wv.rows(),
            wv.cols()
        );
        let (bsz, out) = (xv.rows(), wv.rows());
        let mut y = Matrix::zeros(bsz, out);
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.shape(), (1, out), "linear: bias shape");
            for r in 0..bsz {
                y.row_mut(r).copy_from_slice(bv.as_slice());
            }
        }
        gemm(
            bsz,
            xv.cols(),
            out,
            1.0,
            xv.as_slice(),
            false,
            wv.as_slice(),
            true,
            if b.is_some() { 1.0 } else { 0.0 },
            y.as_mut_slice(),
        );
        self.push(Cow::Owned(y), Op::Linear { x, w, b })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).matmul(self.value(b));
        self.push(Cow::Owned(y), Op::MatMul { a, b })
    }

    pub fn axpby(&mut self, ca: f64, a: Var, cb: f64, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "axpby shape mismatch");
        let data = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        let y = Matrix::from_vec(av.rows(), av.cols(), data);
        self.push(Cow::Owned(y), Op::Axpby { ca, a, cb, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.axpby(1.0, a, 1.0, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.axpby(1.0, a, -1.0, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.value(a).map(|x| c * x);
        self.push(Cow::Owned(y), Op::Scale { a, c })
    }

    /// `a + c` for a constant matrix `c` of the same shape.
    pub fn add_const(&mut self, a: Var, c: &Matrix) -> Var {
        let mut y = self.value(a).clone();
        y.add_scaled(1.0, c);
        self.push(Cow::Owned(y), Op::AddConst { a })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let data = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(x, y)| x * y)
            .collect();
        let y = Matrix::from_vec(av.rows(), av.cols(), data);
        self.push(Cow::Owned(y), Op::Mul { a, b })
    }

    pub fn square(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|x| x * x);
        self.push(Cow::Owned(y), Op::Square { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let k = self.relu_calls;
        self.relu_calls += 1;
        let y = match &self.frozen_relu {
            Some(masks) => {
                let mask = &masks[k];
                let x = self.value(a);
                assert_eq!(mask.shape(), x.shape(), "frozen mask does not match the graph");
                Matrix::from_vec(x.rows(), x.cols(), x.as_slice().iter().zip(mask.as_slice()).map(|(v, m)| v * m).collect())
            }
            None => self.value(a).map(|x| x.max(0.0)),
        };
        self.push(Cow::Owned(y), Op::Relu { a })
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let y = super::ops::softmax_rows(self.value(a));
        self.push(Cow::Owned(y), Op::SoftmaxRows { a })
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let y = super::ops::log_softmax_rows(self.value(a));
        self.push(Cow::Owned(y), Op::LogSoftmaxRows { a })
    }

    /// Row sums, `B x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().sum()).collect();
        let y = Matrix::from_vec(av.rows(), 1, data);
        self.push(Cow::Owned(y), Op::SumCols { a })
    }

    /// Mean of all entries, `1 x 1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert!(!av.is_empty(), "mean of an empty matrix");
        let m = av.as_slice().iter().sum::<f64>() / av.len() as f64;
        self.push(Cow::Owned(Matrix::from_vec(1, 1, vec![m])), Op::Mean { a })
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let y = self.value(a).clone().reshaped(rows, cols);
        self.push(Cow::Owned(y), Op::Reshape { a })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut y = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let out = y.row_mut(r);
            for &p in parts {
                let pv = &self.nodes[p.0].value;
                assert_eq!(pv.rows(), rows, "concat row mismatch");
                out[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        self.push(
            Cow::Owned(y),
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        )
    }

    /// Picks column `idx[r]` of every row `r`, giving `B x 1`.
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), idx.len(), "gather index count");
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < av.cols(), "gather index {c} out of range");
                av.get(r, c)
            })
            .collect();
        let y = Matrix::from_vec(av.rows(), 1, data);
        self.push(
            Cow::Owned(y),
            Op::GatherCols {
                a,
                idx: idx.to_vec(),
            },
        )
    }

    /// Attention scores for a batch of token groups. `q`, `k` are
    /// `(G*n) x d`; the result is `(G*n) x n` where row `g*n+i` holds
    /// `scale * <q_{g,i}, k_{g,j}>` for `j < n`.
    pub fn group_scores(&mut self, q: Var, k: Var, n: usize, scale: f64) -> Var {
        let (qv, kv) = (self.value(q), self.value(k));
        assert_eq!(qv.shape(), kv.shape(), "group_scores shape mismatch");
        assert!(n > 0 && qv.rows() % n == 0, "rows not divisible by group size");
        let groups = qv.rows() / n;
        let mut y = Matrix::zeros(qv.rows(), n);
        for g in 0..groups {
            for i in 0..n {
                let qi = qv.row(g * n + i);
                for j in 0..n {
                    let kj = kv.row(g * n + j);
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    y.set(g * n + i, j, scale * dot);
                }
            }
        }
        self.push(Cow::Owned(y), Op::GroupScores { q, k, n, scale })
    }

    /// Per-group mixing `P_g V_g` with `p: (G*n) x n`, `v: (G*n) x d`.
    pub fn group_mix(&mut self, p: Var, v: Var, n: usize) -> Var {
        let (pv, vv) = (self.value(p), self.value(v));
        assert_eq!(pv.shape(), (vv.rows(), n), "group_mix shape mismatch");
        let groups = vv.rows() / n;
        let d = vv.cols();
        let mut y = Matrix::zeros(vv.rows(), d);
        for g in 0..groups {
            for i in 0..n {
                let out = y.row_mut(g * n + i);
                for j in 0..n {
                    let w = pv.get(g * n + i, j);
                    for (o, x) in out.iter_mut().zip(vv.row(g * n + j)) {
                        *o += w * x;
                    }
                }
            }
        }
        self.push(Cow::Owned(y), Op::GroupMix { p, v, n })
    }

    /// Back-propagates from `output`, seeding its gradient with ones (so a
    /// non-scalar output is treated as the sum of its entries).
    pub fn backward(&self, output: Var) -> Gradients {
        assert!(
            output.0 < self.nodes.len(),
            "backward called on a node that was never recorded"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        let ov = self.value(output);
        grads[output.0] = Some(Matrix::filled(ov.rows(), ov.cols(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Input | Op::Param { .. }) {
                grads[idx] = Some(dy);
                continue;
            }
            match &node.op {
                Op::Input | Op::Param { .. } => unreachable!(),
                Op::Linear { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (bsz, inp, out) = (xv.rows(), xv.cols(), wv.rows());
                    let mut dx = Matrix::zeros(bsz, inp);
                    gemm(bsz, out, inp, 1.0, dy.as_slice(), false, wv.as_slice(), false, 0.0, dx.as_mut_slice());
                    let mut dw = Matrix::zeros(out, inp);
                    gemm(out, bsz, inp, 1.0, dy.as_slice(), true, xv.as_slice(), false, 0.0, dw.as_mut_slice());
                    if let Some(b) = b {
                        let mut db = Matrix::zeros(1, out);
                        for r in 0..bsz {
                            for (d, g) in db.as_mut_slice().iter_mut().zip(dy.row(r)) {
                                *d += g;
                            }
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                    accumulate(&mut grads[x.0], dx);
                    accumulate(&mut grads[w.0], dw);
                }
                Op::MatMul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let mut da = Matrix::zeros(m, k);
                    gemm(m, n, k, 1.0, dy.as_slice(), false, bv.as_slice(), true, 0.0, da.as_mut_slice());
                    let mut db = Matrix::zeros(k, n);
                    gemm(k, m, n, 1.0, av.as_slice(), true, dy.as_slice(), false, 0.0, db.as_mut_slice());
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Axpby { ca, a, cb, b } => {
                    accumulate(&mut grads[a.0], dy.map(|g| ca * g));
                    accumulate(&mut grads[b.0], dy.map(|g| cb * g));
                }
                Op::Scale { a, c } => accumulate(&mut grads[a.0], dy.map(|g| c * g)),
                Op::AddConst { a } => accumulate(&mut grads[a.0], dy),
                Op::Mul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = dy.clone();
                    da.as_mut_slice()
                        .iter_mut()
                        .zip(bv.as_slice())
                        .for_each(|(g, y)| *g *= y);
                    let mut db = dy;
                    db.as_mut_slice()
                        .iter_mut()
                        .zip(av.as_slice())
                        .for_each(|(g, x)| *g *= x);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Square { a } => {
                    let av = self.value(*a);
                    let mut da = dy;
                    da.as_mut_slice()
                        .iter_mut()
                        .zip(av.as_slice())
                        .for_each(|(g, x)| *g *= 2.0 * x);
                    accumulate(&mut grads[a.0], da);
                }
                Op::Relu { a } => {
                    let mut da = dy;
                    da.as_mut_slice()
                        .iter_mut()
                        .zip(node.value.as_slice())
                        .for_each(|(g, y)| {
                            if *y <= 0.0 {
                                *g = 0.0;
                            }
                        });
                    accumulate(&mut grads[a.0], da);
                }
                Op::SoftmaxRows { a } => {
                    let p = &node.value;
                    let mut da = dy;
                    for r in 0..p.rows() {
                        let pr = p.row(r);
                        let dr = da.row_mut(r);
                        let dot: f64 = dr.iter().zip(pr).map(|(g, p)| g * p).sum();
                        dr.iter_mut().zip(pr).for_each(|(g, p)| *g = p * (*g - dot));
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::LogSoftmaxRows { a } => {
                    let lp = &node.value;
                    let mut da = dy;
                    for r in 0..lp.rows() {
                        let dr = da.row_mut(r);
                        let total: f64 = dr.iter().sum();
                        dr.iter_mut()
                            .zip(lp.row(r))
                            .for_each(|(g, l)| *g -= l.exp() * total);
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::SumCols { a } => {
                    let av = self.value(*a);
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let g = dy.get(r, 0);
                        da.row_mut(r).iter_mut().for_each(|x| *x = g);
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::Mean { a } => {
                    let av = self.value(*a);
                    let g = dy.get(0, 0) / av.len() as f64;
                    accumulate(&mut grads[a.0], Matrix::filled(av.rows(), av.cols(), g));
                }
                Op::Reshape { a } => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads[a.0], dy.reshaped(r, c));
                }
                Op::ConcatCols { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut dp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(&dy.row(r)[off..off + cols]);
                        }
                        off += cols;
                        accumulate(&mut grads[p.0], dp);
                    }
                }
                Op::GatherCols { a, idx } => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for (r, &c) in idx.iter().enumerate() {
                        da.set(r, c, dy.get(r, 0));
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::GroupScores { q, k, n, scale } => {
                    let (qv, kv) = (self.value(*q), self.value(*k));
                    let n = *n;
                    let d = qv.cols();
                    let mut dq = Matrix::zeros(qv.rows(), d);
                    let mut dk = Matrix::zeros(kv.rows(), d);
                    for g in 0..qv.rows() / n {
                        for i in 0..n {
                            for j in 0..n {
                                let s = scale * dy.get(g * n + i, j);
                                if s == 0.0 {
                                    continue;
                                }
                                let kj = kv.row(g * n + j);
                                dq.row_mut(g * n + i)
                                    .iter_mut()
                                    .zip(kj)
                                    .for_each(|(o, x)| *o += s * x);
                                let qi = qv.row(g * n + i);
                                dk.row_mut(g * n + j)
                                    .iter_mut()
                                    .zip(qi)
                                    .for_each(|(o, x)| *o += s * x);
                            }
                        }
                    }
                    accumulate(&mut grads[q.0], dq);
                    accumulate(&mut grads[k.0], dk);
                }
                Op::GroupMix { p, v, n } => {
                    let (pv, vv) = (self.value(*p), self.value(*v));
                    let n = *n;
                    let mut dp = Matrix::zeros(pv.rows(), n);
                    let mut dv = Matrix::zeros(vv.rows(), vv.cols());
                    for g in 0..vv.rows() / n {
                        for i in 0..n {
                            let dyi = dy.row(g * n + i);
                            for j in 0..n {
                                let vj = vv.row(g * n + j);
                                let dot: f64 = dyi.iter().zip(vj).map(|(a, b)| a * b).sum();
                                dp.set(g * n + i, j, dot);
                                let w = pv.get(g * n + i, j);
                                dv.row_mut(g * n + j)
                                    .iter_mut()
                                    .zip(dyi)
                                    .for_each(|(o, x)| *o += w * x);
                            }
                        }
                    }
                    accumulate(&mut grads[p.0], dp);
                    accumulate(&mut grads[v.0], dv);
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param { set, id } => Some((i, set, id)),
                _ => None,
            })
            .collect();
        Gradients { grads, params }
    }
}
