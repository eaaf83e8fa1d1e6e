//! Forward and backward kernels.
//!
//! Image tensors are channels-last: `[batch, height, width, channels]`, and
//! the public forward functions also accept a single unbatched
//! `[height, width, channels]` item. Convolutions are "valid" with stride 1;
//! pooling uses floor mode, so a trailing odd row or column is dropped.

use crate::error::{Error, Result};
use crate::nn::gemm::gemm;
use crate::nn::tensor::Tensor;

/// Splits an image tensor into `(batch, h, w, c, was_batched)`.
fn image_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize, bool)> {
    match *t.shape() {
        [h, w, c] => Ok((1, h, w, c, false)),
        [b, h, w, c] => Ok((b, h, w, c, true)),
        _ => Err(Error::shape(
            op,
            format!("expected [b,h,w,c] or [h,w,c], got {:?}", t.shape()),
        )),
    }
}

fn with_batch(shape: Vec<usize>, batched: bool) -> Vec<usize> {
    if batched {
        shape
    } else {
        shape[1..].to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub n: usize,
}

impl ConvDims {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.c
    }
}

/// Rows are output positions, columns follow the `[kh, kw, c]` weight order.
fn im2col(x: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let (oh, ow, patch) = (d.oh(), d.ow(), d.patch());
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..][..patch];
            for ky in 0..d.kh {
                let src = ((oy + ky) * d.w + ox) * d.c;
                let dst = ky * d.kw * d.c;
                row[dst..dst + d.kw * d.c].copy_from_slice(&x[src..src + d.kw * d.c]);
            }
        }
    }
}

fn col2im_add(cols: &[f64], d: &ConvDims, dx: &mut [f64]) {
    let (oh, ow, patch) = (d.oh(), d.ow(), d.patch());
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &cols[(oy * ow + ox) * patch..][..patch];
            for ky in 0..d.kh {
                let dst = ((oy + ky) * d.w + ox) * d.c;
                let src = ky * d.kw * d.c;
                for (o, &g) in dx[dst..dst + d.kw * d.c]
                    .iter_mut()
                    .zip(&row[src..src + d.kw * d.c])
                {
                    *o += g;
                }
            }
        }
    }
}

pub(crate) fn conv_dims(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<(usize, ConvDims, bool)> {
    let (b, h, w, c, batched) = image_dims("conv2d", input)?;
    let &[kh, kw, wc, n] = weights.shape() else {
        return Err(Error::shape(
            "conv2d",
            format!("weights must be [kh,kw,c_in,n], got {:?}", weights.shape()),
        ));
    };
    if wc != c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c} channels, weights expect {wc}"),
        ));
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} does not fit input {h}x{w}"),
        ));
    }
    if bias.shape() != [n] {
        return Err(Error::shape(
            "conv2d",
            format!("bias must be [{n}], got {:?}", bias.shape()),
        ));
    }
    Ok((b, ConvDims { h, w, c, kh, kw, n }, batched))
}

/// Valid, stride-1 convolution: every output is the kernel's dot product
/// with the input patch at that position, plus the filter's bias.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, d, batched) = conv_dims(input, weights, bias)?;
    let (oh, ow, patch) = (d.oh(), d.ow(), d.patch());
    let out_item = oh * ow * d.n;
    let mut out = vec![0.0; b * out_item];
    let mut cols = vec![0.0; oh * ow * patch];
    let in_item = d.h * d.w * d.c;
    for s in 0..b {
        im2col(&input.data()[s * in_item..][..in_item], &d, &mut cols);
        let y = &mut out[s * out_item..][..out_item];
        for row in y.chunks_exact_mut(d.n) {
            row.copy_from_slice(bias.data());
        }
        gemm(
            false,
            false,
            oh * ow,
            patch,
            d.n,
            &cols,
            weights.data(),
            1.0,
            y,
        );
    }
    Tensor::new(with_batch(vec![b, oh, ow, d.n], batched), out)
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    d: &ConvDims,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let b = input.batch();
    let (oh, ow, patch) = (d.oh(), d.ow(), d.patch());
    let in_item = d.h * d.w * d.c;
    let out_item = oh * ow * d.n;
    let mut dx = vec![0.0; b * in_item];
    let mut cols = vec![0.0; oh * ow * patch];
    let mut dcols = vec![0.0; oh * ow * patch];
    for s in 0..b {
        let dy = &grad_out[s * out_item..][..out_item];
        im2col(&input.data()[s * in_item..][..in_item], d, &mut cols);
        gemm(true, false, patch, oh * ow, d.n, &cols, dy, 1.0, grad_w);
        for row in dy.chunks_exact(d.n) {
            for (gb, &g) in grad_b.iter_mut().zip(row) {
                *gb += g;
            }
        }
        gemm(
            false,
            true,
            oh * ow,
            d.n,
            patch,
            dy,
            weights,
            0.0,
            &mut dcols,
        );
        col2im_add(&dcols, d, &mut dx[s * in_item..][..in_item]);
    }
    dx
}

/// Max over non-overlapping `pool x pool` windows. Also returns, per output,
/// the flat input index that won (first in scan order on ties).
pub(crate) fn maxpool2d_with_indices(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    let (b, h, w, c, batched) = image_dims("maxpool2d", input)?;
    if pool == 0 || h < pool || w < pool {
        return Err(Error::shape(
            "maxpool2d",
            format!("input {h}x{w} smaller than pool {pool}"),
        ));
    }
    let (oh, ow) = (h / pool, w / pool);
    let x = input.data();
    let mut out = Vec::with_capacity(b * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for s in 0..b {
        let base = s * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for py in 0..pool {
                        for px in 0..pool {
                            let idx = base + ((oy * pool + py) * w + ox * pool + px) * c + ch;
                            if best == usize::MAX || x[idx] > best_v {
                                best = idx;
                                best_v = x[idx];
                            }
                        }
                    }
                    out.push(best_v);
                    arg.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::new(with_batch(vec![b, oh, ow, c], batched), out)?,
        arg,
    ))
}

pub fn maxpool2d(input: &Tensor, pool: usize) -> Result<Tensor> {
    Ok(maxpool2d_with_indices(input, pool)?.0)
}

/// `y = x W + b` for `x: [batch, n_in]` (or an unbatched `[n_in]`).
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, n_in, batched) = match *input.shape() {
        [n] => (1, n, false),
        [b, n] => (b, n, true),
        _ => {
            return Err(Error::shape(
                "dense",
                format!("input must be [b,n] or [n], got {:?}", input.shape()),
            ))
        }
    };
    let &[w_in, n_out] = weights.shape() else {
        return Err(Error::shape(
            "dense",
            format!("weights must be [n_in,n_out], got {:?}", weights.shape()),
        ));
    };
    if w_in != n_in || bias.shape() != [n_out] {
        return Err(Error::shape(
            "dense",
            format!(
                "input {:?}, weights {:?}, bias {:?}",
                input.shape(),
                weights.shape(),
                bias.shape()
            ),
        ));
    }
    let mut out = Vec::with_capacity(b * n_out);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    gemm(
        false,
        false,
        b,
        n_in,
        n_out,
        input.data(),
        weights.data(),
        1.0,
        &mut out,
    );
    Tensor::new(if batched { vec![b, n_out] } else { vec![n_out] }, out)
}

pub(crate) fn dense_backward(
    input: &[f64],
    b: usize,
    n_in: usize,
    n_out: usize,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    gemm(true, false, n_in, b, n_out, input, grad_out, 1.0, grad_w);
    for row in grad_out.chunks_exact(n_out) {
        for (gb, &g) in grad_b.iter_mut().zip(row) {
            *gb += g;
        }
    }
    let mut dx = vec![0.0; b * n_in];
    gemm(false, true, b, n_out, n_in, grad_out, weights, 0.0, &mut dx);
    dx
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    input.map(|x| if x >= 0.0 { x } else { slope * x })
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

pub fn tanh(input: &Tensor) -> Tensor {
    input.map(f64::tanh)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over the last dimension, shifted by the row maximum.
pub fn softmax(input: &Tensor) -> Tensor {
    let n = *input.shape().last().unwrap_or(&1);
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(n.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub(crate) fn softmax_backward(output: &[f64], grad_out: &[f64], n: usize) -> Vec<f64> {
    let mut dx = vec![0.0; output.len()];
    for ((y, dy), d) in output
        .chunks_exact(n)
        .zip(grad_out.chunks_exact(n))
        .zip(dx.chunks_exact_mut(n))
    {
        let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
        for i in 0..n {
            d[i] = y[i] * (dy[i] - dot);
        }
    }
    dx
}

/// Batch statistics used to normalize one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(crate) fn batch_stats(x: &[f64], b: usize, n: usize) -> BatchStats {
    let mut mean = vec![0.0; n];
    for row in x.chunks_exact(n) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut var = vec![0.0; n];
    for row in x.chunks_exact(n) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= b as f64);
    BatchStats { mean, var }
}

/// Normalizes `[batch, n]` with the given statistics then scales and shifts.
/// Returns the output and the normalized values.
pub(crate) fn batchnorm_apply(
    x: &[f64],
    n: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>) {
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for ((row, xh), yr) in x
        .chunks_exact(n)
        .zip(xhat.chunks_exact_mut(n))
        .zip(y.chunks_exact_mut(n))
    {
        for f in 0..n {
            xh[f] = (row[f] - mean[f]) * inv_std[f];
            yr[f] = gamma[f] * xh[f] + beta[f];
        }
    }
    (y, xhat)
}

/// Training-mode batch normalization over `[batch, n]`.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> Result<Tensor> {
    let &[b, n] = input.shape() else {
        return Err(Error::shape(
            "batchnorm",
            format!("input must be [b,n], got {:?}", input.shape()),
        ));
    };
    if b < 2 {
        return Err(Error::shape(
            "batchnorm",
            "training mode needs a batch of at least 2",
        ));
    }
    if gamma.len() != n || beta.len() != n {
        return Err(Error::shape("batchnorm", "gamma/beta width"));
    }
    let stats = batch_stats(input.data(), b, n);
    let (y, _) = batchnorm_apply(
        input.data(),
        n,
        &stats.mean,
        &stats.var,
        gamma,
        beta,
        epsilon,
    );
    Tensor::new(vec![b, n], y)
}

pub(crate) fn batchnorm_backward_train(
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    grad_out: &[f64],
    n: usize,
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) -> Vec<f64> {
    let b = grad_out.len() / n;
    let mut sum_dxhat = vec![0.0; n];
    let mut sum_dxhat_xhat = vec![0.0; n];
    for (dy, xh) in grad_out.chunks_exact(n).zip(xhat.chunks_exact(n)) {
        for f in 0..n {
            grad_gamma[f] += dy[f] * xh[f];
            grad_beta[f] += dy[f];
            let dxh = dy[f] * gamma[f];
            sum_dxhat[f] += dxh;
            sum_dxhat_xhat[f] += dxh * xh[f];
        }
    }
    let bf = b as f64;
    let mut dx = vec![0.0; grad_out.len()];
    for ((d, dy), xh) in dx
        .chunks_exact_mut(n)
        .zip(grad_out.chunks_exact(n))
        .zip(xhat.chunks_exact(n))
    {
        for f in 0..n {
            let dxh = dy[f] * gamma[f];
            d[f] = inv_std[f] / bf * (bf * dxh - sum_dxhat[f] - xh[f] * sum_dxhat_xhat[f]);
        }
    }
    dx
}

/// Row `label` of an embedding table `[vocab, dim]`.
pub fn embedding_lookup(label: usize, table: &Tensor) -> Result<Tensor> {
    let &[vocab, dim] = table.shape() else {
        return Err(Error::shape(
            "embedding",
            format!("table must be [vocab,dim], got {:?}", table.shape()),
        ));
    };
    if label >= vocab {
        return Err(Error::shape(
            "embedding",
            format!("label {label} out of range for vocab {vocab}"),
        ));
    }
    Tensor::new(
        vec![dim],
        table.data()[label * dim..(label + 1) * dim].to_vec(),
    )
}
