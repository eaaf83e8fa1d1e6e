//! Trainable and fixed layers with cached forward state.
//!
//! Every layer keeps what its backward pass needs from the most recent
//! forward pass. Backward consumes that cache, so calling it twice without a
//! new forward is an error.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, BatchStats, ConvDims};
use crate::nn::tensor::Tensor;

/// Whether a forward pass is for training (batch statistics) or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { filters: usize, kernel: usize },
    MaxPool2d { pool: usize },
    Dense { units: usize },
    Flatten,
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    Softmax,
    BatchNorm { momentum: f64, epsilon: f64 },
    Embedding { vocab: usize, dim: usize },
}

impl LayerSpec {
    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm {
            momentum: 0.99,
            epsilon: 1e-5,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv2d { filters, kernel } => filters > 0 && kernel > 0,
            LayerSpec::MaxPool2d { pool } => pool > 0,
            LayerSpec::Dense { units } => units > 0,
            LayerSpec::LeakyRelu { slope } => slope > 0.0 && slope < 1.0,
            LayerSpec::BatchNorm { momentum, epsilon } => {
                (0.0..1.0).contains(&momentum) && epsilon > 0.0
            }
            LayerSpec::Embedding { vocab, dim } => vocab > 0 && dim > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid layer hyperparameters: {self:?}"
            )))
        }
    }

    /// Per-item output shape for a per-item input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let bad = || Error::shape("layer", format!("{self:?} cannot take input {input:?}"));
        Ok(match *self {
            LayerSpec::Conv2d { filters, kernel } => match *input {
                [h, w, _] if h >= kernel && w >= kernel => {
                    vec![h - kernel + 1, w - kernel + 1, filters]
                }
                _ => return Err(bad()),
            },
            LayerSpec::MaxPool2d { pool } => match *input {
                [h, w, c] if h >= pool && w >= pool => vec![h / pool, w / pool, c],
                _ => return Err(bad()),
            },
            LayerSpec::Dense { units } => match input {
                [_] => vec![units],
                _ => return Err(bad()),
            },
            LayerSpec::Flatten => vec![input.iter().product()],
            LayerSpec::BatchNorm { .. } => match input {
                [_] => input.to_vec(),
                _ => return Err(bad()),
            },
            LayerSpec::Embedding { dim, .. } => match input {
                [] | [1] => vec![dim],
                _ => return Err(bad()),
            },
            _ => input.to_vec(),
        })
    }

    pub fn build<R: Rng + ?Sized>(&self, input: &[usize], rng: &mut R) -> Result<Layer> {
        self.output_shape(input)?;
        Ok(match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                let c = input[2];
                let fan_in = kernel * kernel * c;
                let fan_out = kernel * kernel * filters;
                Layer::Conv2d(Conv2d {
                    weights: glorot(vec![kernel, kernel, c, filters], fan_in, fan_out, rng),
                    bias: Tensor::param(vec![filters], vec![0.0; filters])?,
                    cache: None,
                })
            }
            LayerSpec::MaxPool2d { pool } => Layer::MaxPool2d(MaxPool2d { pool, cache: None }),
            LayerSpec::Dense { units } => {
                let n_in = input[0];
                Layer::Dense(Dense {
                    weights: glorot(vec![n_in, units], n_in, units, rng),
                    bias: Tensor::param(vec![units], vec![0.0; units])?,
                    cache: None,
                })
            }
            LayerSpec::Flatten => Layer::Flatten(Flatten { cache: None }),
            LayerSpec::Relu => Layer::Activation(Activation::new(ActivationKind::Relu)),
            LayerSpec::LeakyRelu { slope } => {
                Layer::Activation(Activation::new(ActivationKind::LeakyRelu(slope)))
            }
            LayerSpec::Sigmoid => Layer::Activation(Activation::new(ActivationKind::Sigmoid)),
            LayerSpec::Tanh => Layer::Activation(Activation::new(ActivationKind::Tanh)),
            LayerSpec::Softmax => Layer::Activation(Activation::new(ActivationKind::Softmax)),
            LayerSpec::BatchNorm { momentum, epsilon } => {
                let n = input[0];
                Layer::BatchNorm(BatchNorm {
                    gamma: Tensor::param(vec![n], vec![1.0; n])?,
                    beta: Tensor::param(vec![n], vec![0.0; n])?,
                    running_mean: Tensor::zeros(vec![n]),
                    running_var: Tensor::filled(vec![n], 1.0),
                    momentum,
                    epsilon,
                    cache: None,
                })
            }
            LayerSpec::Embedding { vocab, dim } => {
                let normal = Normal::new(0.0, 0.02).expect("valid normal");
                let data = (0..vocab * dim).map(|_| normal.sample(rng)).collect();
                Layer::Embedding(Embedding {
                    table: Tensor::param(vec![vocab, dim], data)?,
                    cache: None,
                })
            }
        })
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
fn glorot<R: Rng + ?Sized>(
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let len = shape.iter().product();
    let data = (0..len).map(|_| dist.sample(rng)).collect();
    Tensor::param(shape, data).expect("shape matches data")
}

fn take<T>(cache: &mut Option<T>) -> Result<T> {
    cache.take().ok_or(Error::BackwardWithoutForward)
}

fn param_grad(t: &mut Tensor) -> &mut [f64] {
    t.track();
    t.grad_mut().expect("tracked")
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weights: Tensor,
    pub bias: Tensor,
    cache: Option<(Tensor, ConvDims)>,
}

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pool: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
    cache: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Softmax,
}

#[derive(Debug, Clone)]
pub struct Activation {
    kind: ActivationKind,
    /// Input for the piecewise-linear kinds, output for the others.
    cache: Option<Tensor>,
}

impl Activation {
    fn new(kind: ActivationKind) -> Self {
        Activation { kind, cache: None }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    momentum: f64,
    epsilon: f64,
    cache: Option<(Vec<f64>, Vec<f64>, Mode)>,
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Tensor,
    cache: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Dense(Dense),
    Flatten(Flatten),
    Activation(Activation),
    BatchNorm(BatchNorm),
    Embedding(Embedding),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => LayerSpec::Conv2d {
                filters: l.weights.shape()[3],
                kernel: l.weights.shape()[0],
            },
            Layer::MaxPool2d(l) => LayerSpec::MaxPool2d { pool: l.pool },
            Layer::Dense(l) => LayerSpec::Dense {
                units: l.weights.shape()[1],
            },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Activation(a) => match a.kind {
                ActivationKind::Relu => LayerSpec::Relu,
                ActivationKind::LeakyRelu(slope) => LayerSpec::LeakyRelu { slope },
                ActivationKind::Sigmoid => LayerSpec::Sigmoid,
                ActivationKind::Tanh => LayerSpec::Tanh,
                ActivationKind::Softmax => LayerSpec::Softmax,
            },
            Layer::BatchNorm(l) => LayerSpec::BatchNorm {
                momentum: l.momentum,
                epsilon: l.epsilon,
            },
            Layer::Embedding(l) => LayerSpec::Embedding {
                vocab: l.table.shape()[0],
                dim: l.table.shape()[1],
            },
        }
    }

    /// `input` carries a leading batch dimension.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => {
                if input.shape().len() != 4 {
                    return Err(Error::shape(
                        "conv2d",
                        format!("expected [b,h,w,c], got {:?}", input.shape()),
                    ));
                }
                let (_, dims, _) = ops::conv_dims(input, &l.weights, &l.bias)?;
                let out = ops::conv2d_forward(input, &l.weights, &l.bias)?;
                l.cache = Some((input.clone(), dims));
                Ok(out)
            }
            Layer::MaxPool2d(l) => {
                if input.shape().len() != 4 {
                    return Err(Error::shape(
                        "maxpool2d",
                        format!("expected [b,h,w,c], got {:?}", input.shape()),
                    ));
                }
                let (out, arg) = ops::maxpool2d_with_indices(input, l.pool)?;
                l.cache = Some((input.shape().to_vec(), arg));
                Ok(out)
            }
            Layer::Dense(l) => {
                if input.shape().len() != 2 {
                    return Err(Error::shape(
                        "dense",
                        format!("expected [b,n], got {:?}", input.shape()),
                    ));
                }
                let out = ops::dense_forward(input, &l.weights, &l.bias)?;
                l.cache = Some(input.clone());
                Ok(out)
            }
            Layer::Flatten(l) => {
                l.cache = Some(input.shape().to_vec());
                let b = input.batch();
                input.clone().reshape(vec![b, input.item_len()])
            }
            Layer::Activation(a) => {
                let out = match a.kind {
                    ActivationKind::Relu => ops::relu(input),
                    ActivationKind::LeakyRelu(s) => ops::leaky_relu(input, s),
                    ActivationKind::Sigmoid => ops::sigmoid(input),
                    ActivationKind::Tanh => ops::tanh(input),
                    ActivationKind::Softmax => ops::softmax(input),
                };
                a.cache = Some(match a.kind {
                    ActivationKind::Relu | ActivationKind::LeakyRelu(_) => input.clone(),
                    _ => out.clone(),
                });
                Ok(out)
            }
            Layer::BatchNorm(l) => l.forward(input, mode),
            Layer::Embedding(l) => {
                let &[vocab, dim] = l.table.shape() else {
                    unreachable!()
                };
                let labels = input
                    .data()
                    .iter()
                    .map(|&v| {
                        let idx = v as usize;
                        if v < 0.0 || v.fract() != 0.0 || idx >= vocab {
                            Err(Error::shape(
                                "embedding",
                                format!("label {v} out of range for vocab {vocab}"),
                            ))
                        } else {
                            Ok(idx)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut out = Vec::with_capacity(labels.len() * dim);
                for &i in &labels {
                    out.extend_from_slice(&l.table.data()[i * dim..(i + 1) * dim]);
                }
                l.cache = Some(labels);
                Tensor::new(vec![input.batch(), dim], out)
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => {
                let (input, dims) = take(&mut l.cache)?;
                if grad_out.len() != input.batch() * dims.oh() * dims.ow() * dims.n {
                    return Err(Error::shape(
                        "conv2d backward",
                        format!("grad {:?}", grad_out.shape()),
                    ));
                }
                l.weights.track();
                l.bias.track();
                let (w, gw) = l.weights.data_and_grad_mut();
                let gb = l.bias.grad_mut().expect("tracked");
                let dx = ops::conv2d_backward(
                    &input,
                    &dims,
                    w,
                    grad_out.data(),
                    gw.expect("tracked"),
                    gb,
                );
                Tensor::new(input.shape().to_vec(), dx)
            }
            Layer::MaxPool2d(l) => {
                let (shape, arg) = take(&mut l.cache)?;
                let mut dx = vec![0.0; shape.iter().product()];
                for (&i, &g) in arg.iter().zip(grad_out.data()) {
                    dx[i] += g;
                }
                Tensor::new(shape, dx)
            }
            Layer::Dense(l) => {
                let input = take(&mut l.cache)?;
                let (b, n_in) = (input.shape()[0], input.shape()[1]);
                let n_out = l.weights.shape()[1];
                if grad_out.len() != b * n_out {
                    return Err(Error::shape(
                        "dense backward",
                        format!("grad {:?}", grad_out.shape()),
                    ));
                }
                l.weights.track();
                l.bias.track();
                let (w, gw) = l.weights.data_and_grad_mut();
                let gb = l.bias.grad_mut().expect("tracked");
                let dx = ops::dense_backward(
                    input.data(),
                    b,
                    n_in,
                    n_out,
                    w,
                    grad_out.data(),
                    gw.expect("tracked"),
                    gb,
                );
                Tensor::new(vec![b, n_in], dx)
            }
            Layer::Flatten(l) => {
                let shape = take(&mut l.cache)?;
                grad_out.clone().reshape(shape)
            }
            Layer::Activation(a) => {
                let cached = take(&mut a.cache)?;
                if cached.len() != grad_out.len() {
                    return Err(Error::shape(
                        "activation backward",
                        format!("grad {:?}", grad_out.shape()),
                    ));
                }
                let g = grad_out.data();
                let c = cached.data();
                let dx: Vec<f64> = match a.kind {
                    ActivationKind::Relu => c
                        .iter()
                        .zip(g)
                        .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
                        .collect(),
                    ActivationKind::LeakyRelu(s) => c
                        .iter()
                        .zip(g)
                        .map(|(&x, &d)| if x >= 0.0 { d } else { s * d })
                        .collect(),
                    ActivationKind::Sigmoid => {
                        c.iter().zip(g).map(|(&y, &d)| d * y * (1.0 - y)).collect()
                    }
                    ActivationKind::Tanh => {
                        c.iter().zip(g).map(|(&y, &d)| d * (1.0 - y * y)).collect()
                    }
                    ActivationKind::Softmax => {
                        let n = *cached.shape().last().unwrap_or(&1);
                        ops::softmax_backward(c, g, n)
                    }
                };
                Tensor::new(cached.shape().to_vec(), dx)
            }
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Embedding(l) => {
                let labels = take(&mut l.cache)?;
                let dim = l.table.shape()[1];
                let gt = param_grad(&mut l.table);
                for (&i, row) in labels.iter().zip(grad_out.data().chunks_exact(dim)) {
                    for (t, &g) in gt[i * dim..(i + 1) * dim].iter_mut().zip(row) {
                        *t += g;
                    }
                }
                Ok(Tensor::zeros(vec![labels.len()]))
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&l.weights, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Embedding(l) => vec![&l.table],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Embedding(l) => vec![&mut l.table],
            _ => Vec::new(),
        }
    }

    /// Parameters followed by non-trainable state (batchnorm running stats).
    pub fn state(&self) -> Vec<&Tensor> {
        let mut out = self.params();
        if let Layer::BatchNorm(l) = self {
            out.push(&l.running_mean);
            out.push(&l.running_var);
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            other => other.params_mut(),
        }
    }
}

impl BatchNorm {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let &[b, n] = input.shape() else {
            return Err(Error::shape(
                "batchnorm",
                format!("expected [b,n], got {:?}", input.shape()),
            ));
        };
        if n != self.gamma.len() {
            return Err(Error::shape(
                "batchnorm",
                format!("width {n}, layer has {}", self.gamma.len()),
            ));
        }
        let stats = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(Error::shape(
                        "batchnorm",
                        "training mode needs a batch of at least 2",
                    ));
                }
                let stats = ops::batch_stats(input.data(), b, n);
                let m = self.momentum;
                for (r, v) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
                    *r = m * *r + (1.0 - m) * v;
                }
                for (r, v) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
                    *r = m * *r + (1.0 - m) * v;
                }
                stats
            }
            Mode::Eval => BatchStats {
                mean: self.running_mean.data().to_vec(),
                var: self.running_var.data().to_vec(),
            },
        };
        let (y, xhat) = ops::batchnorm_apply(
            input.data(),
            n,
            &stats.mean,
            &stats.var,
            self.gamma.data(),
            self.beta.data(),
            self.epsilon,
        );
        let inv_std = stats
            .var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        self.cache = Some((xhat, inv_std, mode));
        Tensor::new(vec![b, n], y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (xhat, inv_std, mode) = take(&mut self.cache)?;
        let n = self.gamma.len();
        if grad_out.len() != xhat.len() {
            return Err(Error::shape(
                "batchnorm backward",
                format!("grad {:?}", grad_out.shape()),
            ));
        }
        let gamma = self.gamma.data().to_vec();
        let mut gg = param_grad(&mut self.gamma).to_vec();
        let mut gbeta = param_grad(&mut self.beta).to_vec();
        let dx = match mode {
            Mode::Train => ops::batchnorm_backward_train(
                &xhat,
                &inv_std,
                &gamma,
                grad_out.data(),
                n,
                &mut gg,
                &mut gbeta,
            ),
            Mode::Eval => {
                let mut dx = vec![0.0; xhat.len()];
                for ((d, dy), xh) in dx
                    .chunks_exact_mut(n)
                    .zip(grad_out.data().chunks_exact(n))
                    .zip(xhat.chunks_exact(n))
                {
                    for f in 0..n {
                        gg[f] += dy[f] * xh[f];
                        gbeta[f] += dy[f];
                        d[f] = dy[f] * gamma[f] * inv_std[f];
                    }
                }
                dx
            }
        };
        param_grad(&mut self.gamma).copy_from_slice(&gg);
        param_grad(&mut self.beta).copy_from_slice(&gbeta);
        Tensor::new(grad_out.shape().to_vec(), dx)
    }
}
