//! Forward kernels shared by the graph and by direct (graph-free) callers.
//!
//! Sequences are `[channels × time]`, row-major, so each channel is a
//! contiguous slice and every inner loop below runs over time.

use core::ops::Range;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![0; rank],
            got: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Causal dilated convolution with left zero padding.
///
/// `output[c, t] = bias[c] + Σ_{i,k} weight[c,i,k] · input[i, t − (K−1−k)·dilation]`
pub fn conv1d_dilated_causal(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let (c_in, t_len, c_out, k_width) = conv_dims(input, weight, bias, dilation)?;
    let mut out = vec![0.0; c_out * t_len];
    for (row, &b) in out.chunks_exact_mut(t_len).zip(bias.data()) {
        row.fill(b);
    }
    let dims = ConvDims {
        c_in,
        c_out,
        k_width,
        dilation,
        t_len,
    };
    conv_forward_into(&mut out, input.data(), weight.data(), dims);
    Tensor::matrix(c_out, t_len, out)
}

/// Register block: output channels by time steps.
const CB: usize = 4;
const TB: usize = 4;

#[derive(Clone, Copy)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub k_width: usize,
    pub dilation: usize,
    pub t_len: usize,
}

impl ConvDims {
    fn shift(&self, k: usize) -> usize {
        (self.k_width - 1 - k) * self.dilation
    }

    fn max_shift(&self) -> usize {
        self.shift(0)
    }
}

/// Weights of output channels `c0..c0 + CB` as `[i][k][cc]`.
fn pack_out_block(w: &[f64], c0: usize, d: ConvDims) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.c_in * d.k_width * CB);
    for i in 0..d.c_in {
        for k in 0..d.k_width {
            out.extend((0..CB).map(|cc| w[((c0 + cc) * d.c_in + i) * d.k_width + k]));
        }
    }
    out
}

/// Weights of input channels `i0..i0 + CB` as `[c][k][ii]`.
fn pack_in_block(w: &[f64], i0: usize, d: ConvDims) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.c_out * d.k_width * CB);
    for c in 0..d.c_out {
        for k in 0..d.k_width {
            out.extend((0..CB).map(|ii| w[(c * d.c_in + i0 + ii) * d.k_width + k]));
        }
    }
    out
}

/// `acc[cc][j] += w[cc] · v[j]`.
#[inline(always)]
fn outer_acc(acc: &mut [[f64; TB]; CB], w: &[f64], v: &[f64]) {
    let w: &[f64; CB] = w.try_into().expect("block");
    let v: &[f64; TB] = v.try_into().expect("block");
    for cc in 0..CB {
        for j in 0..TB {
            acc[cc][j] += w[cc] * v[j];
        }
    }
}

/// `out[c, t] += Σ_{i,k} w[c,i,k] · x[i, t − shift_k]`, summed over `i`
/// then `k` for every element.
pub(crate) fn conv_forward_into(out: &mut [f64], x: &[f64], w: &[f64], d: ConvDims) {
    let t_len = d.t_len;
    let full_blocks = d.c_out - d.c_out % CB;
    // Time blocks with no zero padding inside.
    let first = d.max_shift().div_ceil(TB) * TB;
    let last = if first <= t_len { t_len - (t_len - first) % TB } else { first };
    forward_rows(out, x, w, d, full_blocks..d.c_out, 0..t_len);
    forward_rows(out, x, w, d, 0..full_blocks, 0..first.min(t_len));
    forward_rows(out, x, w, d, 0..full_blocks, last.max(first)..t_len);
    for c0 in (0..full_blocks).step_by(CB) {
        let packed = pack_out_block(w, c0, d);
        for t0 in (first..last).step_by(TB) {
            let mut acc = [[0.0; TB]; CB];
            for (cc, a) in acc.iter_mut().enumerate() {
                a.copy_from_slice(&out[(c0 + cc) * t_len + t0..][..TB]);
            }
            let mut wk = packed.chunks_exact(CB);
            for i in 0..d.c_in {
                let row = &x[i * t_len..(i + 1) * t_len];
                for k in 0..d.k_width {
                    let at = t0 - d.shift(k);
                    outer_acc(&mut acc, wk.next().expect("packed"), &row[at..at + TB]);
                }
            }
            for (cc, a) in acc.iter().enumerate() {
                out[(c0 + cc) * t_len + t0..][..TB].copy_from_slice(a);
            }
        }
    }
}

/// Row-wise form of [`conv_forward_into`] over output channels `cs` and
/// times `ts`, with the same per-element summation order.
fn forward_rows(out: &mut [f64], x: &[f64], w: &[f64], d: ConvDims, cs: Range<usize>, ts: Range<usize>) {
    let t_len = d.t_len;
    for c in cs {
        for i in 0..d.c_in {
            for k in 0..d.k_width {
                let shift = d.shift(k);
                let lo = ts.start.max(shift);
                if lo >= ts.end {
                    continue;
                }
                let wv = w[(c * d.c_in + i) * d.k_width + k];
                let dst = &mut out[c * t_len + lo..c * t_len + ts.end];
                let src = &x[i * t_len + lo - shift..i * t_len + ts.end - shift];
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += wv * v;
                }
            }
        }
    }
}

/// `gx[i, t] += Σ_{c,k} w[c,i,k] · go[c, t + shift_k]`, summed over `c`
/// then `k` for every element.
pub(crate) fn conv_backward_input(gx: &mut [f64], go: &[f64], w: &[f64], d: ConvDims) {
    let t_len = d.t_len;
    let full_blocks = d.c_in - d.c_in % CB;
    // Blocks whose reads stay inside the series.
    let last = t_len.saturating_sub(d.max_shift());
    let last = last - last % TB;
    backward_input_rows(gx, go, w, d, full_blocks..d.c_in, 0..t_len);
    backward_input_rows(gx, go, w, d, 0..full_blocks, last..t_len);
    for i0 in (0..full_blocks).step_by(CB) {
        let packed = pack_in_block(w, i0, d);
        for t0 in (0..last).step_by(TB) {
            let mut acc = [[0.0; TB]; CB];
            for (ii, a) in acc.iter_mut().enumerate() {
                a.copy_from_slice(&gx[(i0 + ii) * t_len + t0..][..TB]);
            }
            let mut wk = packed.chunks_exact(CB);
            for c in 0..d.c_out {
                let row = &go[c * t_len..(c + 1) * t_len];
                for k in 0..d.k_width {
                    let at = t0 + d.shift(k);
                    outer_acc(&mut acc, wk.next().expect("packed"), &row[at..at + TB]);
                }
            }
            for (ii, a) in acc.iter().enumerate() {
                gx[(i0 + ii) * t_len + t0..][..TB].copy_from_slice(a);
            }
        }
    }
}

/// Row-wise form of [`conv_backward_input`] over input channels `is` and
/// times `ts`, with the same per-element summation order.
fn backward_input_rows(gx: &mut [f64], go: &[f64], w: &[f64], d: ConvDims, is: Range<usize>, ts: Range<usize>) {
    let t_len = d.t_len;
    for i in is {
        for c in 0..d.c_out {
            for k in 0..d.k_width {
                let shift = d.shift(k);
                let hi = ts.end.min(t_len.saturating_sub(shift));
                if ts.start >= hi {
                    continue;
                }
                let wv = w[(c * d.c_in + i) * d.k_width + k];
                let dst = &mut gx[i * t_len + ts.start..i * t_len + hi];
                let src = &go[c * t_len + ts.start + shift..c * t_len + hi + shift];
                for (g, v) in dst.iter_mut().zip(src) {
                    *g += wv * v;
                }
            }
        }
    }
}

/// `gw[c,i,k] += Σ_t go[c, t] · x[i, t − shift_k]`.
pub(crate) fn conv_backward_weight(gw: &mut [f64], go: &[f64], x: &[f64], d: ConvDims) {
    let t_len = d.t_len;
    for c0 in (0..d.c_out).step_by(CB) {
        let cn = CB.min(d.c_out - c0);
        for i in 0..d.c_in {
            for k in 0..d.k_width {
                let shift = d.shift(k);
                if shift >= t_len {
                    continue;
                }
                let n = t_len - shift;
                let xs = &x[i * t_len..][..n];
                let body = n - n % TB;
                if cn == CB {
                    // Lane j of acc[cc] sums the time steps t ≡ j (mod TB).
                    let mut acc = [[0.0; TB]; CB];
                    let rows: [&[f64]; CB] = core::array::from_fn(|cc| &go[(c0 + cc) * t_len + shift..][..n]);
                    for t0 in (0..body).step_by(TB) {
                        let xv: &[f64; TB] = xs[t0..t0 + TB].try_into().expect("block");
                        for (a, row) in acc.iter_mut().zip(&rows) {
                            let g: &[f64; TB] = row[t0..t0 + TB].try_into().expect("block");
                            for j in 0..TB {
                                a[j] += g[j] * xv[j];
                            }
                        }
                    }
                    for (cc, (a, row)) in acc.iter().zip(&rows).enumerate() {
                        let tail: f64 = (body..n).map(|t| row[t] * xs[t]).sum();
                        gw[((c0 + cc) * d.c_in + i) * d.k_width + k] += (a[0] + a[1]) + (a[2] + a[3]) + tail;
                    }
                } else {
                    for c in c0..c0 + cn {
                        let row = &go[c * t_len + shift..][..n];
                        gw[(c * d.c_in + i) * d.k_width + k] += dot(row, xs);
                    }
                }
            }
        }
    }
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn conv_dims(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<(usize, usize, usize, usize)> {
    expect_rank("conv1d", input, 2)?;
    expect_rank("conv1d", weight, 3)?;
    let (c_in, t_len) = (input.shape()[0], input.shape()[1]);
    let (c_out, w_in, k_width) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if w_in != c_in {
        return Err(mismatch("conv1d", &[c_out, c_in, k_width], weight.shape()));
    }
    if bias.shape() != [c_out] {
        return Err(mismatch("conv1d bias", &[c_out], bias.shape()));
    }
    if k_width == 0 || dilation == 0 || t_len == 0 {
        return Err(Error::InvalidConfig(
            "conv1d needs kernel width, dilation and length >= 1".into(),
        ));
    }
    Ok((c_in, t_len, c_out, k_width))
}

/// `tanh(filter) · sigmoid(gate)`, elementwise.
pub fn gated_activation(filter_in: &Tensor, gate_in: &Tensor) -> Result<Tensor> {
    if filter_in.shape() != gate_in.shape() {
        return Err(mismatch("gated_activation", filter_in.shape(), gate_in.shape()));
    }
    let data = filter_in
        .data()
        .iter()
        .zip(gate_in.data())
        .map(|(&f, &g)| libm::tanh(f) * sigmoid(g))
        .collect();
    Tensor::new(filter_in.shape().to_vec(), data)
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| x.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Max-subtracted softmax over a 1-D tensor.
pub fn softmax(input: &Tensor) -> Result<Tensor> {
    expect_rank("softmax", input, 1)?;
    if input.is_empty() {
        return Err(mismatch("softmax", &[1], input.shape()));
    }
    Ok(Tensor::from_vec(softmax_slice(input.data())))
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| libm::exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `Σ mask·(pred − target)² / Σ mask`.
pub fn masked_mse(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(mismatch("masked_mse", &[pred.len()], &[target.len(), mask.len()]));
    }
    let denom: f64 = mask.data().iter().sum();
    if denom <= 0.0 {
        return Err(Error::EmptyMask);
    }
    let num = compensated_sum(
        pred.data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
            .map(|((&p, &t), &m)| m * (p - t) * (p - t)),
    );
    Ok(num / denom)
}

/// Neumaier summation. The loss feeds finite-difference checks, where a
/// few ulp of reduction noise is visible.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}
