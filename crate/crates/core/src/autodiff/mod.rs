//! Eager reverse-mode differentiation over the handful of operations the
//! signature network uses.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] is a single reverse sweep. A parameter leaf that feeds
//! several consumers (the tied activity block) accumulates the gradient of
//! every use.

pub mod gradcheck;
pub mod ops;

use alloc::vec;
use alloc::vec::Vec;

pub use gradcheck::{check_gradients, finite_diff_check, GradCheckEntry, GradCheckReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use ops::{expect_rank, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Parameter,
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    },
    Add(NodeId, NodeId),
    Gated {
        filter: NodeId,
        gate: NodeId,
    },
    Relu(NodeId),
    TimeMean(NodeId),
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Concat(NodeId, NodeId),
    AppendBroadcast {
        seq: NodeId,
        vector: NodeId,
    },
    AttentionScores {
        query: NodeId,
        keys: NodeId,
        scale: f64,
    },
    Softmax(NodeId),
    WeightedSum {
        values: NodeId,
        weights: NodeId,
    },
    MaskedMse {
        pred: NodeId,
        target: NodeId,
        mask: Tensor,
        denom: f64,
    },
    Mean(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf node. Parameters always have one (zeros when the
    /// loss does not depend on them); intermediate nodes are not retained.
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, node: NodeId) -> Option<Tensor> {
        self.grads.get_mut(node.0).and_then(|g| g.take())
    }
}

fn grad_buf<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut [f64] {
    grads[id.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Constant leaf; no gradient is propagated into it unless asked for with
    /// [`Graph::tracked_input`].
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Non-trainable leaf whose gradient is still computed (used by tests that
    /// probe input sensitivities).
    pub fn tracked_input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, true)
    }

    /// Trainable leaf.
    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Parameter, true)
    }

    pub fn parameters(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Parameter))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    pub fn conv1d_dilated_causal(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    ) -> Result<NodeId> {
        let value = ops::conv1d_dilated_causal(
            self.value(input),
            self.value(weight),
            self.value(bias),
            dilation,
        )?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                expected: va.shape().to_vec(),
                got: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn gated_activation(&mut self, filter: NodeId, gate: NodeId) -> Result<NodeId> {
        let value = ops::gated_activation(self.value(filter), self.value(gate))?;
        let rg = self.rg(filter) || self.rg(gate);
        Ok(self.push(value, Op::Gated { filter, gate }, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = ops::relu(self.value(input));
        let rg = self.rg(input);
        self.push(value, Op::Relu(input), rg)
    }

    /// `[C × T] → [C]`, mean over time.
    pub fn time_mean(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        expect_rank("time_mean", x, 2)?;
        let (c, t) = (x.shape()[0], x.shape()[1]);
        let data = (0..c)
            .map(|r| x.row(r).iter().sum::<f64>() / t as f64)
            .collect();
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_vec(data), Op::TimeMean(input), rg))
    }

    /// `weight · input + bias` with `weight: [O × C]`, `input: [C]`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        expect_rank("linear", x, 1)?;
        expect_rank("linear", w, 2)?;
        let (o, c) = (w.shape()[0], w.shape()[1]);
        if x.len() != c || b.shape() != [o] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                expected: vec![o, c],
                got: vec![b.len(), x.len()],
            });
        }
        let data = (0..o)
            .map(|r| b.data()[r] + w.row(r).iter().zip(x.data()).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            Tensor::from_vec(data),
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    /// Stacks `[Ca × T]` on top of `[Cb × T]`.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        expect_rank("concat", va, 2)?;
        expect_rank("concat", vb, 2)?;
        if va.shape()[1] != vb.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "concat",
                expected: va.shape().to_vec(),
                got: vb.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(va.len() + vb.len());
        data.extend_from_slice(va.data());
        data.extend_from_slice(vb.data());
        let value = Tensor::matrix(va.shape()[0] + vb.shape()[0], va.shape()[1], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Appends a vector `[S]` to every time step of `[C × T]`, giving `[(C+S) × T]`.
    pub fn append_broadcast(&mut self, seq: NodeId, vector: NodeId) -> Result<NodeId> {
        let (x, v) = (self.value(seq), self.value(vector));
        expect_rank("append_broadcast", x, 2)?;
        expect_rank("append_broadcast", v, 1)?;
        let (c, t) = (x.shape()[0], x.shape()[1]);
        let mut data = Vec::with_capacity((c + v.len()) * t);
        data.extend_from_slice(x.data());
        for &s in v.data() {
            data.extend(core::iter::repeat_n(s, t));
        }
        let value = Tensor::matrix(c + v.len(), t, data)?;
        let rg = self.rg(seq) || self.rg(vector);
        Ok(self.push(value, Op::AppendBroadcast { seq, vector }, rg))
    }

    /// `scores[t] = scale · Σ_j query[j] · keys[j, t]`.
    pub fn attention_scores(&mut self, query: NodeId, keys: NodeId, scale: f64) -> Result<NodeId> {
        let (q, k) = (self.value(query), self.value(keys));
        expect_rank("attention_scores", q, 1)?;
        expect_rank("attention_scores", k, 2)?;
        if k.shape()[0] != q.len() {
            return Err(Error::ShapeMismatch {
                op: "attention_scores",
                expected: vec![q.len()],
                got: k.shape().to_vec(),
            });
        }
        let t = k.shape()[1];
        let mut data = vec![0.0; t];
        for (j, &qj) in q.data().iter().enumerate() {
            for (s, &kv) in data.iter_mut().zip(k.row(j)) {
                *s += qj * kv;
            }
        }
        for s in &mut data {
            *s *= scale;
        }
        let rg = self.rg(query) || self.rg(keys);
        Ok(self.push(
            Tensor::from_vec(data),
            Op::AttentionScores { query, keys, scale },
            rg,
        ))
    }

    pub fn softmax(&mut self, input: NodeId) -> Result<NodeId> {
        let value = ops::softmax(self.value(input))?;
        let rg = self.rg(input);
        Ok(self.push(value, Op::Softmax(input), rg))
    }

    /// `out[s] = Σ_t values[s, t] · weights[t]`.
    pub fn weighted_sum(&mut self, values: NodeId, weights: NodeId) -> Result<NodeId> {
        let (v, a) = (self.value(values), self.value(weights));
        expect_rank("weighted_sum", v, 2)?;
        expect_rank("weighted_sum", a, 1)?;
        if v.shape()[1] != a.len() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                expected: vec![v.shape()[0], a.len()],
                got: v.shape().to_vec(),
            });
        }
        let data = (0..v.shape()[0])
            .map(|s| v.row(s).iter().zip(a.data()).map(|(x, w)| x * w).sum())
            .collect();
        let rg = self.rg(values) || self.rg(weights);
        Ok(self.push(Tensor::from_vec(data), Op::WeightedSum { values, weights }, rg))
    }

    /// Mean squared error over the minutes where `mask` is 1.
    pub fn masked_mse(&mut self, pred: NodeId, target: NodeId, mask: &Tensor) -> Result<NodeId> {
        let loss = ops::masked_mse(self.value(pred), self.value(target), mask)?;
        let denom = mask.data().iter().sum();
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedMse {
                pred,
                target,
                mask: mask.clone(),
                denom,
            },
            rg,
        ))
    }

    /// Arithmetic mean of scalar nodes.
    pub fn mean(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut sum = 0.0;
        for &i in items {
            let v = self.value(i);
            if !v.is_scalar() {
                return Err(Error::NotScalar(v.shape().to_vec()));
            }
            sum += v.data()[0];
        }
        let rg = items.iter().any(|&i| self.rg(i));
        Ok(self.push(
            Tensor::scalar(sum / items.len() as f64),
            Op::Mean(items.to_vec()),
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            if matches!(node.op, Op::Input | Op::Parameter) {
                grads[idx] = Some(g);
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if matches!(n.op, Op::Parameter) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(n.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Input | Op::Parameter => {}
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (c_in, t_len) = (x.shape()[0], x.shape()[1]);
                let (c_out, k_width) = (w.shape()[0], w.shape()[2]);
                if self.rg(*bias) {
                    let gb = grad_buf(grads, *bias, &[c_out]);
                    for c in 0..c_out {
                        gb[c] += gd[c * t_len..(c + 1) * t_len].iter().sum::<f64>();
                    }
                }
                let dims = ops::ConvDims {
                    c_in,
                    c_out,
                    k_width,
                    dilation: *dilation,
                    t_len,
                };
                if self.rg(*weight) {
                    let gw = grad_buf(grads, *weight, w.shape());
                    ops::conv_backward_weight(gw, gd, x.data(), dims);
                }
                if self.rg(*input) {
                    let gx = grad_buf(grads, *input, x.shape());
                    ops::conv_backward_input(gx, gd, w.data(), dims);
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if self.rg(id) {
                        let buf = grad_buf(grads, id, g.shape());
                        for (x, y) in buf.iter_mut().zip(gd) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Gated { filter, gate } => {
                let f = self.value(*filter).data();
                let s = self.value(*gate).data();
                if self.rg(*filter) {
                    let buf = grad_buf(grads, *filter, g.shape());
                    for i in 0..gd.len() {
                        let th = libm::tanh(f[i]);
                        buf[i] += gd[i] * (1.0 - th * th) * sigmoid(s[i]);
                    }
                }
                if self.rg(*gate) {
                    let buf = grad_buf(grads, *gate, g.shape());
                    for i in 0..gd.len() {
                        let sg = sigmoid(s[i]);
                        buf[i] += gd[i] * libm::tanh(f[i]) * sg * (1.0 - sg);
                    }
                }
            }
            Op::Relu(input) => {
                let x = self.value(*input).data();
                let buf = grad_buf(grads, *input, g.shape());
                for i in 0..gd.len() {
                    // Subgradient at exactly zero is zero.
                    if x[i] > 0.0 {
                        buf[i] += gd[i];
                    }
                }
            }
            Op::TimeMean(input) => {
                let x = self.value(*input);
                let (c, t) = (x.shape()[0], x.shape()[1]);
                let buf = grad_buf(grads, *input, x.shape());
                for r in 0..c {
                    let v = gd[r] / t as f64;
                    for b in &mut buf[r * t..(r + 1) * t] {
                        *b += v;
                    }
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (o, c) = (w.shape()[0], w.shape()[1]);
                if self.rg(*bias) {
                    let gb = grad_buf(grads, *bias, &[o]);
                    for r in 0..o {
                        gb[r] += gd[r];
                    }
                }
                if self.rg(*weight) {
                    let gw = grad_buf(grads, *weight, w.shape());
                    for r in 0..o {
                        for j in 0..c {
                            gw[r * c + j] += gd[r] * x.data()[j];
                        }
                    }
                }
                if self.rg(*input) {
                    let gx = grad_buf(grads, *input, x.shape());
                    for r in 0..o {
                        for j in 0..c {
                            gx[j] += gd[r] * w.data()[r * c + j];
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let na = self.value(*a).len();
                if self.rg(*a) {
                    let buf = grad_buf(grads, *a, self.value(*a).shape());
                    for (x, y) in buf.iter_mut().zip(&gd[..na]) {
                        *x += y;
                    }
                }
                if self.rg(*b) {
                    let buf = grad_buf(grads, *b, self.value(*b).shape());
                    for (x, y) in buf.iter_mut().zip(&gd[na..]) {
                        *x += y;
                    }
                }
            }
            Op::AppendBroadcast { seq, vector } => {
                let x = self.value(*seq);
                let (nx, t) = (x.len(), x.shape()[1]);
                if self.rg(*seq) {
                    let buf = grad_buf(grads, *seq, x.shape());
                    for (a, b) in buf.iter_mut().zip(&gd[..nx]) {
                        *a += b;
                    }
                }
                if self.rg(*vector) {
                    let s = self.value(*vector).len();
                    let buf = grad_buf(grads, *vector, &[s]);
                    for j in 0..s {
                        buf[j] += gd[nx + j * t..nx + (j + 1) * t].iter().sum::<f64>();
                    }
                }
            }
            Op::AttentionScores { query, keys, scale } => {
                let q = self.value(*query);
                let k = self.value(*keys);
                let t = k.shape()[1];
                if self.rg(*query) {
                    let buf = grad_buf(grads, *query, q.shape());
                    for j in 0..q.len() {
                        let dot: f64 = k.row(j).iter().zip(gd).map(|(a, b)| a * b).sum();
                        buf[j] += scale * dot;
                    }
                }
                if self.rg(*keys) {
                    let buf = grad_buf(grads, *keys, k.shape());
                    for j in 0..q.len() {
                        let qj = scale * q.data()[j];
                        for (a, &b) in buf[j * t..(j + 1) * t].iter_mut().zip(gd) {
                            *a += qj * b;
                        }
                    }
                }
            }
            Op::Softmax(input) => {
                let y = node.value.data();
                let dot: f64 = y.iter().zip(gd).map(|(a, b)| a * b).sum();
                let buf = grad_buf(grads, *input, node.value.shape());
                for i in 0..y.len() {
                    buf[i] += y[i] * (gd[i] - dot);
                }
            }
            Op::WeightedSum { values, weights } => {
                let v = self.value(*values);
                let a = self.value(*weights);
                let (s, t) = (v.shape()[0], v.shape()[1]);
                if self.rg(*values) {
                    let buf = grad_buf(grads, *values, v.shape());
                    for r in 0..s {
                        for (b, &w) in buf[r * t..(r + 1) * t].iter_mut().zip(a.data()) {
                            *b += gd[r] * w;
                        }
                    }
                }
                if self.rg(*weights) {
                    let buf = grad_buf(grads, *weights, a.shape());
                    for r in 0..s {
                        for (b, &x) in buf.iter_mut().zip(v.row(r)) {
                            *b += gd[r] * x;
                        }
                    }
                }
            }
            Op::MaskedMse {
                pred,
                target,
                mask,
                denom,
            } => {
                let p = self.value(*pred);
                let tg = self.value(*target);
                let scale = 2.0 * gd[0] / denom;
                let m = mask.data();
                if self.rg(*pred) {
                    let buf = grad_buf(grads, *pred, p.shape());
                    for i in 0..buf.len() {
                        if m[i] != 0.0 {
                            buf[i] += scale * m[i] * (p.data()[i] - tg.data()[i]);
                        }
                    }
                }
                if self.rg(*target) {
                    let buf = grad_buf(grads, *target, tg.shape());
                    for i in 0..buf.len() {
                        if m[i] != 0.0 {
                            buf[i] -= scale * m[i] * (p.data()[i] - tg.data()[i]);
                        }
                    }
                }
            }
            Op::Mean(items) => {
                let v = gd[0] / items.len() as f64;
                for &id in items {
                    if self.rg(id) {
                        let shape = self.value(id).shape().to_vec();
                        grad_buf(grads, id, &shape)[0] += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::stream(seed, &[99]);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn affine_hand_derivative() {
        // y = w·x + b as a 1×1 linear map.
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![3.0]));
        let w = g.parameter(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let b = g.parameter(Tensor::from_vec(vec![0.5]));
        let y = g.linear(x, w, b).unwrap();
        let m = g.mean(&[y]).unwrap();
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.parameter(Tensor::from_vec(vec![1.0, 2.0]));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::NotScalar(_))));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let a = g.parameter(Tensor::from_vec(vec![1.0]));
        let unused = g.parameter(Tensor::zeros(&[2, 3]));
        let l = g.mean(&[a]).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(unused).unwrap().shape(), &[2, 3]);
        assert!(grads.get(unused).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_mse_gradient_is_zero_where_masked() {
        let mut g = Graph::new();
        let p = g.parameter(random(&[20], 1));
        let t = g.input(random(&[20], 2));
        let mask = Tensor::from_vec((0..20).map(|i| (i % 3 != 0) as u8 as f64).collect());
        let l = g.masked_mse(p, t, &mask).unwrap();
        let grads = g.backward(l).unwrap();
        let gp = grads.get(p).unwrap();
        for i in 0..20 {
            if i % 3 == 0 {
                assert_eq!(gp.data()[i], 0.0);
            } else {
                assert_ne!(gp.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let mut g = Graph::new();
        let x = g.parameter(Tensor::from_vec(vec![0.0, 1.0, -1.0]));
        let r = g.relu(x);
        let zeros = g.input(Tensor::zeros(&[3]));
        let l = g.masked_mse(r, zeros, &Tensor::full(&[3], 1.0)).unwrap();
        let grads = g.backward(l).unwrap();
        // d/dx mean(relu(x)^2) = 2 relu(x) relu'(x) / 3
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 2.0 / 3.0, 0.0]);
    }

    #[test]
    fn tied_parameter_accumulates_both_uses() {
        // Same weight used by two convolutions vs. two independent copies.
        let x = random(&[2, 12], 3);
        let w = random(&[2, 2, 2], 4);
        let bias = Tensor::zeros(&[2]);
        let target = random(&[2, 12], 5);
        let mask = Tensor::full(&[24], 1.0);

        let build = |g: &mut Graph, w1: NodeId, w2: NodeId| {
            let xi = g.input(x.clone());
            let b = g.input(bias.clone());
            let h = g.conv1d_dilated_causal(xi, w1, b, 1).unwrap();
            let h = g.gated_activation(h, h).unwrap();
            let y = g.conv1d_dilated_causal(h, w2, b, 2).unwrap();
            let t = g.input(target.clone());
            g.masked_mse(y, t, &mask).unwrap()
        };

        let mut tied = Graph::new();
        let wt = tied.parameter(w.clone());
        let l = build(&mut tied, wt, wt);
        let gt = tied.backward(l).unwrap();

        let mut untied = Graph::new();
        let wa = untied.parameter(w.clone());
        let wb = untied.parameter(w.clone());
        let l = build(&mut untied, wa, wb);
        let gu = untied.backward(l).unwrap();

        for i in 0..w.len() {
            let sum = gu.get(wa).unwrap().data()[i] + gu.get(wb).unwrap().data()[i];
            assert!((gt.get(wt).unwrap().data()[i] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_is_causal() {
        let w = random(&[3, 2, 2], 6);
        let b = random(&[3], 7);
        let x = random(&[2, 40], 8);
        let base = ops::conv1d_dilated_causal(&x, &w, &b, 4).unwrap();
        for t0 in [0, 7, 23, 39] {
            let mut xp = x.clone();
            xp.data_mut()[40 + t0] += 1.0;
            let y = ops::conv1d_dilated_causal(&xp, &w, &b, 4).unwrap();
            for c in 0..3 {
                for t in 0..t0 {
                    assert_eq!(y.row(c)[t], base.row(c)[t]);
                }
            }
        }
    }
}
