//! Finite-difference checks of every differentiable layer and loss.

mod support;

use malvis::nn::gradcheck::{central_difference, relative_error, DEFAULT_STEP};
use malvis::nn::{LayerSpec, Mode, Sequential, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{probe, Objective, Probe, TOLERANCE};

fn assert_passes(name: &str, p: &Probe) {
    let err = p.check();
    println!("{name:<14} max relative error {err:.3e}");
    assert!(err < TOLERANCE, "{name}: relative error {err:e}");
}

#[test]
fn conv2d() {
    let p = probe(
        1,
        &[5, 4, 2],
        2,
        &[LayerSpec::Conv2d {
            filters: 3,
            kernel: 3,
        }],
        Objective::Weighted,
    );
    assert_passes("conv2d", &p);
}

#[test]
fn dense() {
    let p = probe(
        2,
        &[6],
        3,
        &[LayerSpec::Dense { units: 4 }],
        Objective::Weighted,
    );
    assert_passes("dense", &p);
}

#[test]
fn relu() {
    assert_passes(
        "relu",
        &probe(3, &[16], 4, &[LayerSpec::Relu], Objective::Weighted),
    );
}

#[test]
fn leaky_relu() {
    let p = probe(
        4,
        &[16],
        4,
        &[LayerSpec::LeakyRelu { slope: 0.2 }],
        Objective::Weighted,
    );
    assert_passes("leaky_relu", &p);
    // On the negative side the local slope is exactly the leak.
    let mut net = p.net.clone();
    let x = Tensor::new(vec![1, 16], vec![-0.7; 16]).unwrap();
    net.forward(&x, Mode::Train).unwrap();
    let g = net.backward(&Tensor::filled(vec![1, 16], 1.0)).unwrap();
    assert!(g.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn maxpool_routes_gradient() {
    let p = probe(
        5,
        &[5, 4, 2],
        2,
        &[LayerSpec::MaxPool2d { pool: 2 }],
        Objective::Weighted,
    );
    assert_passes("maxpool2d", &p);
}

#[test]
fn batchnorm() {
    let p = probe(6, &[5], 6, &[LayerSpec::batch_norm()], Objective::Weighted);
    assert_passes("batchnorm", &p);
    // Behind a dense layer and a nonlinearity, as in the generator. A bias
    // feeding batchnorm directly has an identically zero gradient.
    let p = probe(
        16,
        &[3],
        5,
        &[
            LayerSpec::Dense { units: 4 },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::batch_norm(),
            LayerSpec::Tanh,
        ],
        Objective::Weighted,
    );
    assert_passes("dense+leaky+bn", &p);
}

#[test]
fn embedding_gradient_is_sparse() {
    let mut p = probe(
        7,
        &[],
        3,
        &[LayerSpec::Embedding { vocab: 4, dim: 5 }],
        Objective::Weighted,
    );
    p.input = Tensor::new(vec![3], vec![2.0, 0.0, 2.0]).unwrap();
    p.differentiable_input = false;
    assert_passes("embedding", &p);
    let mut net = p.net.clone();
    net.zero_grad();
    let out = net.forward(&p.input, Mode::Train).unwrap();
    net.backward(&Tensor::filled(out.shape().to_vec(), 1.0))
        .unwrap();
    let g = net.params()[0].grad().unwrap();
    assert!(g[5..10].iter().all(|&v| v == 0.0), "row 1 untouched");
    assert!(g[15..20].iter().all(|&v| v == 0.0), "row 3 untouched");
    assert!(g[10..15].iter().all(|&v| v == 2.0), "row 2 used twice");
}

#[test]
fn sigmoid() {
    assert_passes(
        "sigmoid",
        &probe(8, &[12], 3, &[LayerSpec::Sigmoid], Objective::Weighted),
    );
}

#[test]
fn tanh() {
    assert_passes(
        "tanh",
        &probe(9, &[12], 3, &[LayerSpec::Tanh], Objective::Weighted),
    );
}

#[test]
fn softmax_with_cross_entropy() {
    let p = probe(10, &[3], 4, &[LayerSpec::Softmax], Objective::CrossEntropy);
    assert_passes("softmax+ce", &p);
    let p = probe(20, &[5], 4, &[LayerSpec::Softmax], Objective::Weighted);
    assert_passes("softmax", &p);
}

#[test]
fn sigmoid_with_binary_cross_entropy() {
    let p = probe(
        11,
        &[4],
        5,
        &[LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid],
        Objective::BinaryCrossEntropy,
    );
    assert_passes("bce", &p);
}

#[test]
fn single_dense_with_cross_entropy_on_one_sample() {
    let p = probe(
        12,
        &[7],
        1,
        &[LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
        Objective::CrossEntropy,
    );
    assert_passes("dense+ce", &p);
}

#[test]
fn full_cnn_stack_on_toy_image() {
    let specs = [
        LayerSpec::Conv2d {
            filters: 2,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: 2 },
        LayerSpec::Conv2d {
            filters: 3,
            kernel: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 4 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ];
    let p = probe(13, &[8, 8, 1], 2, &specs, Objective::CrossEntropy);
    assert_passes("cnn stack", &p);
}

#[test]
fn batchnorm_eval_mode_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut net = Sequential::new(vec![3], &[LayerSpec::batch_norm()], &mut rng).unwrap();
    let warm = Tensor::new(vec![4, 3], (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
    net.forward(&warm, Mode::Train).unwrap();
    let x = Tensor::new(vec![2, 3], vec![0.3, -0.2, 1.1, 0.4, 0.9, -0.5]).unwrap();
    let w = [0.5, -1.0, 0.25, 2.0, 1.0, -0.3];
    let f = |net: &mut Sequential, v: &[f64]| -> f64 {
        let t = Tensor::new(vec![2, 3], v.to_vec()).unwrap();
        net.forward(&t, Mode::Eval)
            .unwrap()
            .data()
            .iter()
            .zip(&w)
            .map(|(a, b)| a * b)
            .sum()
    };
    let mut n = net.clone();
    f(&mut n, x.data());
    let g = n
        .backward(&Tensor::new(vec![2, 3], w.to_vec()).unwrap())
        .unwrap();
    let numeric = central_difference(x.data(), DEFAULT_STEP, |v| f(&mut net.clone(), v));
    assert!(relative_error(g.data(), &numeric) < TOLERANCE);
}
