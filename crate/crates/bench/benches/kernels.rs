use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use malvis::cnn::{build_cnn, images_to_tensor};
use malvis::nn::ops::conv2d_forward;
use malvis::nn::{Mode, Tensor};
use malvis::prs::{decode_sample, encode_values, Label, PrsLayout, SampleRecord};
use malvis::smote::{smote_oversample, SmoteConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    (0..n)
        .map(|_| rng.random_range(0..=u32::MAX as u64))
        .collect()
}

fn codec(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layout = PrsLayout::fundamental();
    let values = random_values(&mut rng, 128);
    let image = encode_values(&values, &layout).unwrap();
    c.bench_function("prs_encode_128", |b| {
        b.iter(|| encode_values(black_box(&values), &layout).unwrap())
    });
    c.bench_function("prs_decode_128", |b| {
        b.iter(|| decode_sample(black_box(&image), &layout).unwrap())
    });
}

fn convolution(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = Tensor::new(
        vec![8, 64, 64, 1],
        (0..8 * 4096).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let weights = Tensor::new(
        vec![3, 3, 1, 32],
        (0..288).map(|_| rng.random_range(-0.1..0.1)).collect(),
    )
    .unwrap();
    let bias = Tensor::zeros(vec![32]);
    c.bench_function("conv2d_64x64x1_to_32_batch8", |b| {
        b.iter(|| conv2d_forward(black_box(&input), &weights, &bias).unwrap())
    });

    let mut model = build_cnn(0);
    let images: Vec<_> = (0..8)
        .map(|_| encode_values(&random_values(&mut rng, 128), &PrsLayout::fundamental()).unwrap())
        .collect();
    let refs: Vec<_> = images.iter().collect();
    let batch = images_to_tensor(&refs).unwrap();
    let mut net = model.net().clone();
    c.bench_function("cnn_forward_backward_batch8", |b| {
        b.iter_batched(
            || Tensor::filled(vec![8, 2], 0.5),
            |grad| {
                net.forward(&batch, Mode::Train).unwrap();
                net.backward(&grad).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("cnn_predict_batch8", |b| {
        b.iter(|| model.predict_batch(black_box(&refs)).unwrap())
    });
}

fn oversampling(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let minority: Vec<SampleRecord> = (0..300)
        .map(|_| {
            SampleRecord::new(
                (0..128).map(|_| rng.random_range(0..5000)).collect(),
                Label::Malign,
            )
            .unwrap()
        })
        .collect();
    let config = SmoteConfig {
        target_count: Some(600),
        ..SmoteConfig::default()
    };
    c.bench_function("smote_300_to_600_dim128", |b| {
        b.iter(|| smote_oversample(black_box(&minority), &config).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = codec, convolution, oversampling
}
criterion_main!(benches);
