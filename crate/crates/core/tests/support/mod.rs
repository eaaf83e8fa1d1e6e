//! Finite-difference probes shared by the gradient tests and the acceptance run.
#![allow(dead_code)]

use malvis::nn::gradcheck::{central_difference, relative_error, DEFAULT_STEP};
use malvis::nn::loss::{binary_cross_entropy_batch, cross_entropy_batch};
use malvis::nn::{LayerSpec, Mode, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy)]
pub enum Objective {
    /// Sum of the outputs weighted by fixed random coefficients.
    Weighted,
    CrossEntropy,
    BinaryCrossEntropy,
}

pub struct Probe {
    pub net: Sequential,
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub targets: Vec<usize>,
    pub objective: Objective,
    pub differentiable_input: bool,
}

impl Probe {
    fn loss_and_grad(&self, net: &mut Sequential, input: &Tensor) -> (f64, Tensor) {
        let out = net.forward(input, Mode::Train).unwrap();
        match self.objective {
            Objective::Weighted => {
                let loss = out
                    .data()
                    .iter()
                    .zip(&self.weights)
                    .map(|(a, b)| a * b)
                    .sum();
                (
                    loss,
                    Tensor::new(out.shape().to_vec(), self.weights.clone()).unwrap(),
                )
            }
            Objective::CrossEntropy => cross_entropy_batch(&out, &self.targets).unwrap(),
            Objective::BinaryCrossEntropy => {
                let t: Vec<f64> = self.targets.iter().map(|&t| t as f64).collect();
                binary_cross_entropy_batch(&out, &t).unwrap()
            }
        }
    }

    /// Worst relative error across the input and every parameter tensor.
    pub fn check(&self) -> f64 {
        let mut net = self.net.clone();
        net.zero_grad();
        let (_, upstream) = self.loss_and_grad(&mut net, &self.input);
        let input_grad = net.backward(&upstream).unwrap();
        let analytic_params: Vec<Vec<f64>> = net
            .params()
            .iter()
            .map(|p| p.grad().unwrap().to_vec())
            .collect();

        let mut worst: f64 = 0.0;
        if self.differentiable_input {
            let numeric = central_difference(self.input.data(), DEFAULT_STEP, |x| {
                let mut n = self.net.clone();
                let t = Tensor::new(self.input.shape().to_vec(), x.to_vec()).unwrap();
                self.loss_and_grad(&mut n, &t).0
            });
            worst = worst.max(relative_error(input_grad.data(), &numeric));
        }
        for (pi, analytic) in analytic_params.iter().enumerate() {
            let base = self.net.params()[pi].data().to_vec();
            let numeric = central_difference(&base, DEFAULT_STEP, |x| {
                let mut n = self.net.clone();
                n.params_mut()[pi].data_mut().copy_from_slice(x);
                self.loss_and_grad(&mut n, &self.input).0
            });
            worst = worst.max(relative_error(analytic, &numeric));
        }
        worst
    }
}

fn away_from_zero(rng: &mut ChaCha8Rng) -> f64 {
    let v: f64 = rng.random_range(0.1..1.5);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

pub fn probe(
    seed: u64,
    input_shape: &[usize],
    batch: usize,
    specs: &[LayerSpec],
    objective: Objective,
) -> Probe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Sequential::new(input_shape.to_vec(), specs, &mut rng).unwrap();
    let mut shape = vec![batch];
    shape.extend_from_slice(input_shape);
    let n: usize = shape.iter().product();
    let input = Tensor::new(shape, (0..n).map(|_| away_from_zero(&mut rng)).collect()).unwrap();
    let out_len = batch * net.output_shape().iter().product::<usize>();
    let weights = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let classes = *net.output_shape().last().unwrap();
    let targets = (0..batch)
        .map(|_| rng.random_range(0..classes.max(2)))
        .collect();
    Probe {
        net,
        input,
        weights,
        targets,
        objective,
        differentiable_input: true,
    }
}

/// One small probe per differentiable building block, each on at most 64
/// input elements.
pub fn layer_probes() -> Vec<(&'static str, Probe)> {
    let mut embedding = probe(
        7,
        &[],
        3,
        &[LayerSpec::Embedding { vocab: 4, dim: 5 }],
        Objective::Weighted,
    );
    embedding.input = Tensor::new(vec![3], vec![2.0, 0.0, 2.0]).unwrap();
    embedding.differentiable_input = false;
    vec![
        (
            "conv2d",
            probe(
                1,
                &[4, 4, 2],
                2,
                &[LayerSpec::Conv2d {
                    filters: 3,
                    kernel: 3,
                }],
                Objective::Weighted,
            ),
        ),
        (
            "dense",
            probe(
                2,
                &[6],
                3,
                &[LayerSpec::Dense { units: 4 }],
                Objective::Weighted,
            ),
        ),
        (
            "relu",
            probe(3, &[16], 4, &[LayerSpec::Relu], Objective::Weighted),
        ),
        (
            "leaky_relu",
            probe(
                4,
                &[16],
                4,
                &[LayerSpec::LeakyRelu { slope: 0.2 }],
                Objective::Weighted,
            ),
        ),
        (
            "maxpool2d",
            probe(
                5,
                &[5, 3, 2],
                2,
                &[LayerSpec::MaxPool2d { pool: 2 }],
                Objective::Weighted,
            ),
        ),
        (
            "batchnorm",
            probe(6, &[5], 6, &[LayerSpec::batch_norm()], Objective::Weighted),
        ),
        ("embedding", embedding),
        (
            "sigmoid",
            probe(8, &[12], 3, &[LayerSpec::Sigmoid], Objective::Weighted),
        ),
        (
            "tanh",
            probe(9, &[12], 3, &[LayerSpec::Tanh], Objective::Weighted),
        ),
        (
            "softmax+ce",
            probe(10, &[3], 4, &[LayerSpec::Softmax], Objective::CrossEntropy),
        ),
        (
            "bce",
            probe(
                11,
                &[4],
                5,
                &[LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid],
                Objective::BinaryCrossEntropy,
            ),
        ),
    ]
}
