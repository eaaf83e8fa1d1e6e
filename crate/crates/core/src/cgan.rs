//! Conditional GAN over flattened binary images.
//!
//! Both networks take a class label next to their main input. The label is
//! embedded, projected by a dense layer to the width of the main input and
//! concatenated with it before the trunk:
//!
//! ```text
//! discriminator: [image (d*d, in [-1,1]) | proj(embed(y))] -> 128 -> 256 -> 512 -> 1 (sigmoid)
//! generator:     [noise (n)              | proj(embed(y))] -> 256 -> 512 -> 1024 -> d*d (tanh)
//! ```
//!
//! Images live in "GAN space" during training: black is +1, white is -1.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{count_labels, LabeledImage};
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::nn::loss::binary_cross_entropy_batch;
use crate::nn::{LayerSpec, Mode, OptimizerKind, OptimizerState, Sequential, Tensor};
use crate::prs::{BinaryImage, Label, Pixel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CganConfig {
    pub noise_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub d_learning_rate: f64,
    pub g_learning_rate: f64,
    /// First-moment decay of both Adam optimizers.
    pub adam_beta1: f64,
    pub label_count: usize,
    pub embedding_dim: usize,
    pub d_hidden: Vec<usize>,
    pub g_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub image_side: usize,
    pub rng_seed: u64,
}

impl Default for CganConfig {
    fn default() -> Self {
        CganConfig {
            noise_dim: 100,
            epochs: 100,
            batch_size: 128,
            d_learning_rate: 2e-4,
            g_learning_rate: 1e-3,
            adam_beta1: 0.5,
            label_count: 2,
            embedding_dim: 50,
            d_hidden: vec![128, 256, 512],
            g_hidden: vec![256, 512, 1024],
            leaky_slope: 0.2,
            image_side: 64,
            rng_seed: 0,
        }
    }
}

impl CganConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.noise_dim,
            self.epochs,
            self.batch_size,
            self.embedding_dim,
            self.image_side,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(
                "cgan noise_dim, epochs, batch_size, embedding_dim and image_side must be positive"
                    .into(),
            ));
        }
        if self.label_count != 2 {
            return Err(Error::Config("cgan label_count must be 2".into()));
        }
        if !(self.d_learning_rate > 0.0 && self.g_learning_rate > 0.0) {
            return Err(Error::Config("cgan learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::Config("cgan adam_beta1 must lie in [0, 1)".into()));
        }
        if self.d_hidden.contains(&0) || self.g_hidden.contains(&0) {
            return Err(Error::Config("cgan hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn optimizer(&self, lr: f64) -> Result<OptimizerState> {
        let kind = match OptimizerKind::adam() {
            OptimizerKind::Adam { beta2, epsilon, .. } => OptimizerKind::Adam {
                beta1: self.adam_beta1,
                beta2,
                epsilon,
            },
            other => other,
        };
        OptimizerState::new(kind, lr)
    }
}

/// A trunk network fed with `[main input | projected label embedding]`.
#[derive(Debug, Clone)]
pub struct ConditionalNet {
    branch: Sequential,
    trunk: Sequential,
}

impl ConditionalNet {
    fn new<R: Rng + ?Sized>(
        main_dim: usize,
        label_count: usize,
        embedding_dim: usize,
        trunk_specs: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let branch = Sequential::new(
            vec![],
            &[
                LayerSpec::Embedding {
                    vocab: label_count,
                    dim: embedding_dim,
                },
                LayerSpec::Dense { units: main_dim },
            ],
            rng,
        )?;
        let trunk = Sequential::new(vec![2 * main_dim], trunk_specs, rng)?;
        Ok(ConditionalNet { branch, trunk })
    }

    fn from_parts(branch: Sequential, trunk: Sequential) -> Result<Self> {
        let main = branch.output_shape().iter().product::<usize>();
        if branch.input_shape() != [] as [usize; 0] || trunk.input_shape() != [2 * main] {
            return Err(Error::Checkpoint(
                "conditional network parts do not fit together".into(),
            ));
        }
        Ok(ConditionalNet { branch, trunk })
    }

    /// Width of the main (non-label) input.
    pub fn main_dim(&self) -> usize {
        self.branch.output_shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.trunk.output_shape().iter().product()
    }

    pub fn branch(&self) -> &Sequential {
        &self.branch
    }

    pub fn trunk(&self) -> &Sequential {
        &self.trunk
    }

    pub fn forward(&mut self, main: &Tensor, labels: &[Label], mode: Mode) -> Result<Tensor> {
        let dim = self.main_dim();
        if main.shape() != [labels.len(), dim] {
            return Err(Error::shape(
                "conditional forward",
                format!(
                    "main input {:?} for {} labels of width {dim}",
                    main.shape(),
                    labels.len()
                ),
            ));
        }
        let ids = Tensor::new(
            vec![labels.len()],
            labels.iter().map(|l| l.index() as f64).collect(),
        )?;
        let proj = self.branch.forward(&ids, mode)?;
        let mut joined = Vec::with_capacity(2 * main.len());
        for (m, p) in main
            .data()
            .chunks_exact(dim)
            .zip(proj.data().chunks_exact(dim))
        {
            joined.extend_from_slice(m);
            joined.extend_from_slice(p);
        }
        self.trunk
            .forward(&Tensor::new(vec![labels.len(), 2 * dim], joined)?, mode)
    }

    /// Backpropagates through trunk and label branch; returns the gradient
    /// with respect to the main input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let dim = self.main_dim();
        let joined = self.trunk.backward(grad_out)?;
        let batch = joined.batch();
        let mut main = Vec::with_capacity(batch * dim);
        let mut proj = Vec::with_capacity(batch * dim);
        for row in joined.data().chunks_exact(2 * dim) {
            main.extend_from_slice(&row[..dim]);
            proj.extend_from_slice(&row[dim..]);
        }
        self.branch
            .backward(&Tensor::new(vec![batch, dim], proj)?)?;
        Tensor::new(vec![batch, dim], main)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.branch.params();
        p.extend(self.trunk.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.branch.params_mut();
        p.extend(self.trunk.params_mut());
        p
    }

    pub fn zero_grad(&mut self) {
        self.branch.zero_grad();
        self.trunk.zero_grad();
    }

    pub fn parameter_count(&self) -> usize {
        self.branch.parameter_count() + self.trunk.parameter_count()
    }
}

pub fn build_discriminator(config: &CganConfig, rng: &mut impl Rng) -> Result<ConditionalNet> {
    config.validate()?;
    let mut specs = Vec::new();
    for &units in &config.d_hidden {
        specs.push(LayerSpec::Dense { units });
        specs.push(LayerSpec::LeakyRelu {
            slope: config.leaky_slope,
        });
    }
    specs.push(LayerSpec::Dense { units: 1 });
    specs.push(LayerSpec::Sigmoid);
    let side = config.image_side;
    ConditionalNet::new(
        side * side,
        config.label_count,
        config.embedding_dim,
        &specs,
        rng,
    )
}

pub fn build_generator(config: &CganConfig, rng: &mut impl Rng) -> Result<ConditionalNet> {
    config.validate()?;
    let mut specs = Vec::new();
    for &units in &config.g_hidden {
        specs.push(LayerSpec::Dense { units });
        specs.push(LayerSpec::LeakyRelu {
            slope: config.leaky_slope,
        });
        specs.push(LayerSpec::batch_norm());
    }
    let side = config.image_side;
    specs.push(LayerSpec::Dense { units: side * side });
    specs.push(LayerSpec::Tanh);
    ConditionalNet::new(
        config.noise_dim,
        config.label_count,
        config.embedding_dim,
        &specs,
        rng,
    )
}

/// Black maps to +1, white to -1.
pub fn to_gan(image: &BinaryImage) -> Vec<f64> {
    image
        .pixels()
        .iter()
        .map(|p| if p.is_black() { 1.0 } else { -1.0 })
        .collect()
}

/// Inverse of [`to_gan`] on two-valued input; other values are thresholded at 0.
pub fn from_gan(values: &[f64], side: usize) -> Result<BinaryImage> {
    binarize(values, side, 0.0)
}

/// Strict threshold: `value > threshold` is black.
pub fn binarize(raw: &[f64], side: usize, threshold: f64) -> Result<BinaryImage> {
    let pixels = raw
        .iter()
        .map(|&v| {
            if v > threshold {
                Pixel::Black
            } else {
                Pixel::White
            }
        })
        .collect();
    BinaryImage::from_pixels(side, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLossRecord {
    pub iter: usize,
    pub d_loss_real: f64,
    pub d_loss_fake: f64,
    pub g_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanLossTrace {
    pub records: Vec<GanLossRecord>,
}

impl GanLossTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,d_loss_real,d_loss_fake,g_loss,d_acc_real,d_acc_fake\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter, r.d_loss_real, r.d_loss_fake, r.g_loss, r.d_acc_real, r.d_acc_fake
            ));
        }
        s
    }

    /// Column means over the last `n` records (all of them if fewer).
    pub fn tail_means(&self, n: usize) -> Option<GanLossRecord> {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        let first = tail.first()?;
        let k = tail.len() as f64;
        let mean = |f: fn(&GanLossRecord) -> f64| tail.iter().map(f).sum::<f64>() / k;
        Some(GanLossRecord {
            iter: first.iter,
            d_loss_real: mean(|r| r.d_loss_real),
            d_loss_fake: mean(|r| r.d_loss_fake),
            g_loss: mean(|r| r.g_loss),
            d_acc_real: mean(|r| r.d_acc_real),
            d_acc_fake: mean(|r| r.d_acc_fake),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Cgan {
    pub generator: ConditionalNet,
    pub discriminator: ConditionalNet,
}

const CKPT_PARTS: [&str; 4] = [
    "generator.branch",
    "generator.trunk",
    "discriminator.branch",
    "discriminator.trunk",
];

impl Cgan {
    pub fn new(config: &CganConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let discriminator = build_discriminator(config, &mut rng)?;
        let generator = build_generator(config, &mut rng)?;
        Ok(Cgan {
            generator,
            discriminator,
        })
    }

    pub fn image_side(&self) -> usize {
        (self.generator.output_dim() as f64).sqrt().round() as usize
    }

    fn parts(&self) -> [(&'static str, &Sequential); 4] {
        [
            (CKPT_PARTS[0], &self.generator.branch),
            (CKPT_PARTS[1], &self.generator.trunk),
            (CKPT_PARTS[2], &self.discriminator.branch),
            (CKPT_PARTS[3], &self.discriminator.trunk),
        ]
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::to_bytes(&self.parts())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_checkpoint(path, &self.parts())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = checkpoint::read_checkpoint(path)?;
        let mut take = |i: usize| checkpoint::take_net(&mut nets, CKPT_PARTS[i]);
        let (gb, gt, db, dt) = (take(0)?, take(1)?, take(2)?, take(3)?);
        Ok(Cgan {
            generator: ConditionalNet::from_parts(gb, gt)?,
            discriminator: ConditionalNet::from_parts(db, dt)?,
        })
    }
}

fn noise(rng: &mut ChaCha8Rng, batch: usize, dim: usize) -> Result<Tensor> {
    Tensor::new(
        vec![batch, dim],
        (0..batch * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect(),
    )
}

/// Conditioning labels for generated batches, drawn from the training class
/// prior so the discriminator cannot tell real from fake by label frequency.
fn prior_labels(rng: &mut ChaCha8Rng, data: &[LabeledImage], batch: usize) -> Vec<Label> {
    (0..batch)
        .map(|_| data[rng.random_range(0..data.len())].label)
        .collect()
}

fn fraction(preds: &Tensor, hit: impl Fn(f64) -> bool) -> f64 {
    preds.data().iter().filter(|&&p| hit(p)).count() as f64 / preds.len() as f64
}

/// Alternating adversarial training: per iteration one discriminator step on
/// a real batch, one on a generated batch, then one generator step through
/// the discriminator (whose parameters are left untouched by that step).
pub fn train_cgan(data: &[LabeledImage], config: &CganConfig) -> Result<(Cgan, GanLossTrace)> {
    let mut trace = GanLossTrace::default();
    let gan = train_cgan_traced(data, config, &mut trace)?;
    Ok((gan, trace))
}

/// Like [`train_cgan`], but records into a caller-owned trace so the
/// iterations before a divergence remain available.
pub fn train_cgan_traced(
    data: &[LabeledImage],
    config: &CganConfig,
    trace: &mut GanLossTrace,
) -> Result<Cgan> {
    config.validate()?;
    let counts = count_labels(data.iter().map(|d| &d.label));
    if counts.contains(&0) {
        return Err(Error::Dataset("cgan training needs both classes".into()));
    }
    if config.batch_size > data.len() {
        return Err(Error::Dataset(format!(
            "batch size {} exceeds {} training images",
            config.batch_size,
            data.len()
        )));
    }
    let side = config.image_side;
    if let Some(bad) = data.iter().find(|d| d.image.side() != side) {
        return Err(Error::SideMismatch {
            expected: side,
            got: bad.image.side(),
        });
    }
    let real: Vec<Vec<f64>> = data.iter().map(|d| to_gan(&d.image)).collect();

    let mut gan = Cgan::new(config)?;
    let mut d_opt = config.optimizer(config.d_learning_rate)?;
    let mut g_opt = config.optimizer(config.g_learning_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(1);

    let bs = config.batch_size;
    let ones = vec![1.0; bs];
    let zeros = vec![0.0; bs];
    let mut order: Vec<usize> = (0..data.len()).collect();
    trace.records.clear();
    let Cgan {
        generator: g,
        discriminator: d,
    } = &mut gan;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks_exact(bs) {
            let iter = trace.len();
            let diverged = |loss: f64| {
                if loss.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Diverged { iteration: iter })
                }
            };

            let x = Tensor::new(
                vec![bs, side * side],
                batch
                    .iter()
                    .flat_map(|&i| real[i].iter().copied())
                    .collect(),
            )?;
            let y: Vec<Label> = batch.iter().map(|&i| data[i].label).collect();
            d.zero_grad();
            let p = d.forward(&x, &y, Mode::Train)?;
            let (d_loss_real, grad) = binary_cross_entropy_batch(&p, &ones)?;
            diverged(d_loss_real)?;
            d.backward(&grad)?;
            d_opt.step(&mut d.params_mut())?;
            let d_acc_real = fraction(&p, |v| v > 0.5);

            let z = noise(&mut rng, bs, config.noise_dim)?;
            let fy = prior_labels(&mut rng, data, bs);
            let fake = g.forward(&z, &fy, Mode::Train)?;
            d.zero_grad();
            let p = d.forward(&fake, &fy, Mode::Train)?;
            let (d_loss_fake, grad) = binary_cross_entropy_batch(&p, &zeros)?;
            diverged(d_loss_fake)?;
            d.backward(&grad)?;
            d_opt.step(&mut d.params_mut())?;
            let d_acc_fake = fraction(&p, |v| v < 0.5);

            let z = noise(&mut rng, bs, config.noise_dim)?;
            let gy = prior_labels(&mut rng, data, bs);
            g.zero_grad();
            let fake = g.forward(&z, &gy, Mode::Train)?;
            let p = d.forward(&fake, &gy, Mode::Train)?;
            let (g_loss, grad) = binary_cross_entropy_batch(&p, &ones)?;
            diverged(g_loss)?;
            let into_fake = d.backward(&grad)?;
            g.backward(&into_fake)?;
            g_opt.step(&mut g.params_mut())?;
            d.zero_grad();

            trace.records.push(GanLossRecord {
                iter,
                d_loss_real,
                d_loss_fake,
                g_loss,
                d_acc_real,
                d_acc_fake,
            });
        }
    }
    Ok(gan)
}

/// Raw generator output (values in (-1, 1)) for `count` samples of one class.
pub fn generate_raw(
    generator: &mut ConditionalNet,
    label: Label,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = generator.output_dim();
    let mut out = Vec::with_capacity(count);
    let mut left = count;
    while left > 0 {
        let n = left.min(CHUNK);
        let z = noise(&mut rng, n, generator.main_dim())?;
        let raw = generator.forward(&z, &vec![label; n], Mode::Eval)?;
        out.extend(raw.data().chunks_exact(dim).map(<[f64]>::to_vec));
        left -= n;
    }
    Ok(out)
}

/// `count` binarized malign images from the generator in inference mode.
pub fn generate_malign(
    generator: &mut ConditionalNet,
    count: usize,
    seed: u64,
) -> Result<Vec<BinaryImage>> {
    let side = (generator.output_dim() as f64).sqrt().round() as usize;
    generate_raw(generator, Label::Malign, count, seed)?
        .iter()
        .map(|raw| binarize(raw, side, 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::binary_cross_entropy;

    fn tiny() -> CganConfig {
        CganConfig {
            noise_dim: 6,
            epochs: 2,
            batch_size: 4,
            embedding_dim: 3,
            d_hidden: vec![8, 8],
            g_hidden: vec![8, 8],
            image_side: 4,
            rng_seed: 9,
            ..Default::default()
        }
    }

    fn toy_data() -> Vec<LabeledImage> {
        (0..10)
            .map(|i| {
                let mut image = BinaryImage::white(4);
                let label = if i % 2 == 0 {
                    Label::Benign
                } else {
                    Label::Malign
                };
                for c in 0..(1 + i % 4) {
                    image.set(0, c, Pixel::Black);
                }
                if label == Label::Malign {
                    image.set(3, 3, Pixel::Black);
                }
                LabeledImage { image, label }
            })
            .collect()
    }

    #[test]
    fn default_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = CganConfig::default();
        let d = build_discriminator(&cfg, &mut rng).unwrap();
        assert_eq!(d.trunk().input_shape(), &[8192]);
        let widths: Vec<usize> = d
            .trunk()
            .layer_shapes()
            .iter()
            .step_by(2)
            .map(|s| s[0])
            .collect();
        assert_eq!(widths, vec![128, 256, 512, 1]);
        let g = build_generator(&cfg, &mut rng).unwrap();
        assert_eq!(g.main_dim(), 100);
        assert_eq!(g.output_dim(), 4096);
    }

    #[test]
    fn output_ranges_and_determinism() {
        let cfg = tiny();
        let mut gan = Cgan::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = noise(&mut rng, 3, 6).unwrap();
        let y = [Label::Benign, Label::Malign, Label::Malign];
        let img = gan.generator.forward(&z, &y, Mode::Train).unwrap();
        assert!(img.data().iter().all(|v| v.abs() < 1.0));
        let p = gan.discriminator.forward(&img, &y, Mode::Train).unwrap();
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let again = gan.generator.clone().forward(&z, &y, Mode::Train).unwrap();
        assert_eq!(img, again);
    }

    #[test]
    fn label_embedding_gets_gradient() {
        let cfg = tiny();
        let mut gan = Cgan::new(&cfg).unwrap();
        let x = Tensor::filled(vec![1, 16], 0.5);
        for net in [&mut gan.discriminator, &mut gan.generator] {
            net.zero_grad();
            let main = Tensor::filled(vec![1, net.main_dim()], 0.5);
            let out = net.forward(&main, &[Label::Malign], Mode::Eval).unwrap();
            net.backward(&Tensor::filled(out.shape().to_vec(), 1.0))
                .unwrap();
            let emb = net.params()[0].grad().unwrap();
            assert!(emb[..3].iter().all(|&v| v == 0.0));
            assert!(emb[3..6].iter().any(|&v| v != 0.0));
        }
        let p0 = gan
            .discriminator
            .forward(&x, &[Label::Benign], Mode::Eval)
            .unwrap();
        let p1 = gan
            .discriminator
            .forward(&x, &[Label::Malign], Mode::Eval)
            .unwrap();
        assert_ne!(p0.data(), p1.data());
    }

    #[test]
    fn discriminator_losses_realize_value_function() {
        let cfg = tiny();
        let mut gan = Cgan::new(&cfg).unwrap();
        let data = toy_data();
        let x = Tensor::new(
            vec![3, 16],
            data[..3].iter().flat_map(|d| to_gan(&d.image)).collect(),
        )
        .unwrap();
        let y: Vec<Label> = data[..3].iter().map(|d| d.label).collect();
        let real = gan.discriminator.forward(&x, &y, Mode::Train).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fake_in = gan
            .generator
            .forward(&noise(&mut rng, 3, 6).unwrap(), &y, Mode::Train)
            .unwrap();
        let fake = gan
            .discriminator
            .forward(&fake_in, &y, Mode::Train)
            .unwrap();
        let (lr, _) = binary_cross_entropy_batch(&real, &[1.0; 3]).unwrap();
        let (lf, _) = binary_cross_entropy_batch(&fake, &[0.0; 3]).unwrap();
        let hand: f64 = -(real.data().iter().map(|p| p.ln()).sum::<f64>()
            + fake.data().iter().map(|p| (1.0 - p).ln()).sum::<f64>())
            / 3.0;
        assert!((lr + lf - hand).abs() < 1e-10);
        assert!((binary_cross_entropy(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn training_trace_is_complete_and_reproducible() {
        let cfg = tiny();
        let (mut gan, trace) = train_cgan(&toy_data(), &cfg).unwrap();
        // 10 images, batch 4 -> 2 full batches per epoch.
        assert_eq!(trace.len(), 4);
        assert!(trace.records.iter().enumerate().all(|(i, r)| r.iter == i));
        assert!(trace
            .records
            .iter()
            .all(|r| [r.d_loss_real, r.d_loss_fake, r.g_loss]
                .iter()
                .all(|v| v.is_finite())));
        let (_, again) = train_cgan(&toy_data(), &cfg).unwrap();
        assert_eq!(trace, again);
        assert_eq!(trace.to_csv().lines().count(), 5);
        let imgs = generate_malign(&mut gan.generator, 5, 3).unwrap();
        assert_eq!(imgs.len(), 5);
        assert!(imgs.iter().all(|i| i.side() == 4));
        assert!(generate_malign(&mut gan.generator, 0, 3)
            .unwrap()
            .is_empty());
        assert_eq!(generate_malign(&mut gan.generator, 5, 3).unwrap(), imgs);
    }

    #[test]
    fn training_preconditions() {
        let cfg = tiny();
        let data = toy_data();
        let benign: Vec<_> = data
            .iter()
            .filter(|d| d.label == Label::Benign)
            .cloned()
            .collect();
        assert!(matches!(train_cgan(&benign, &cfg), Err(Error::Dataset(_))));
        let big = CganConfig {
            batch_size: 11,
            ..tiny()
        };
        assert!(train_cgan(&data, &big).is_err());
        let bad = CganConfig {
            label_count: 3,
            ..tiny()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn binarize_rules() {
        let img = binarize(&[-1.0; 9], 3, 0.0).unwrap();
        assert_eq!(img.black_count(), 0);
        assert_eq!(binarize(&[1.0; 9], 3, 0.0).unwrap().black_count(), 9);
        assert_eq!(binarize(&[0.0; 9], 3, 0.0).unwrap().black_count(), 0);
        let v = [1.0, -1.0, -1.0, 1.0];
        assert_eq!(to_gan(&from_gan(&v, 2).unwrap()), v);
    }

    #[test]
    fn checkpoint_round_trip() {
        let gan = Cgan::new(&tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gan.ckpt");
        gan.save(&path).unwrap();
        let mut back = Cgan::load(&path).unwrap();
        let mut orig = gan.clone();
        let a = generate_raw(&mut orig.generator, Label::Malign, 2, 1).unwrap();
        let b = generate_raw(&mut back.generator, Label::Malign, 2, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.image_side(), 4);
    }
}
