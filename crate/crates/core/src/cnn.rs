//! The image detector: two convolution + pooling stages and a dense head.
//!
//! ```text
//! 64x64x1 -> conv 32@3x3 + ReLU -> 62x62x32 -> maxpool 2 -> 31x31x32
//!         -> conv 64@3x3 + ReLU -> 29x29x64 -> maxpool 2 -> 14x14x64
//!         -> flatten 12544 -> dense 128 + ReLU -> dense 2 + softmax
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{count_labels, LabeledImage};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::nn::checkpoint;
use crate::nn::loss::cross_entropy_batch;
use crate::nn::{LayerSpec, Mode, OptimizerState, Sequential, Tensor};
use crate::prs::{BinaryImage, Label};

pub const INPUT_SIDE: usize = 64;
const CHECKPOINT_NAME: &str = "cnn";
const PREDICT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    pub fold_count: usize,
    pub input_side: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            rng_seed: 0,
            fold_count: 5,
            input_side: INPUT_SIDE,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.fold_count == 0 || self.input_side == 0
        {
            return Err(Error::Config(
                "cnn epochs, batch_size, fold_count and input_side must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("cnn learning_rate must be positive".into()));
        }
        Ok(())
    }
}

pub fn cnn_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters: 32,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: 2 },
        LayerSpec::Conv2d {
            filters: 64,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 128 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub probs: [f64; 2],
}

impl Prediction {
    fn from_probs(p: &[f64]) -> Self {
        // Ties go to benign.
        let label = if p[1] > p[0] {
            Label::Malign
        } else {
            Label::Benign
        };
        Prediction {
            label,
            probs: [p[0], p[1]],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnnModel {
    net: Sequential,
}

/// Builds the detector for 64x64 images.
pub fn build_cnn(seed: u64) -> CnnModel {
    build_cnn_for(INPUT_SIDE, seed).expect("the reference stack fits 64x64 inputs")
}

/// Same stack for another square input side (at least 10 pixels).
pub fn build_cnn_for(side: usize, seed: u64) -> Result<CnnModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(CnnModel {
        net: Sequential::new(vec![side, side, 1], &cnn_specs(), &mut rng)?,
    })
}

/// Stacks images into `[batch, side, side, 1]` with black as 1.0 and white as 0.0.
pub fn images_to_tensor(images: &[&BinaryImage]) -> Result<Tensor> {
    let side = images.first().map_or(0, |i| i.side());
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in images {
        if img.side() != side {
            return Err(Error::SideMismatch {
                expected: side,
                got: img.side(),
            });
        }
        data.extend(img.to_unit_values());
    }
    Tensor::new(vec![images.len(), side, side, 1], data)
}

impl CnnModel {
    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub fn side(&self) -> usize {
        self.net.input_shape()[0]
    }

    fn check_side(&self, img: &BinaryImage) -> Result<()> {
        if img.side() != self.side() {
            return Err(Error::SideMismatch {
                expected: self.side(),
                got: img.side(),
            });
        }
        Ok(())
    }

    pub fn predict(&mut self, image: &BinaryImage) -> Result<Prediction> {
        Ok(self.predict_batch(&[image])?[0])
    }

    pub fn predict_batch(&mut self, images: &[&BinaryImage]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(PREDICT_BATCH) {
            for img in chunk {
                self.check_side(img)?;
            }
            let probs = self.net.forward(&images_to_tensor(chunk)?, Mode::Eval)?;
            out.extend(probs.data().chunks_exact(2).map(Prediction::from_probs));
        }
        Ok(out)
    }

    pub fn evaluate(&mut self, test: &[LabeledImage]) -> Result<EvalReport> {
        let images: Vec<&BinaryImage> = test.iter().map(|t| &t.image).collect();
        let predicted: Vec<Label> = self
            .predict_batch(&images)?
            .into_iter()
            .map(|p| p.label)
            .collect();
        let truth: Vec<Label> = test.iter().map(|t| t.label).collect();
        EvalReport::from_predictions(&truth, &predicted)
    }

    pub fn accuracy(&mut self, data: &[LabeledImage]) -> Result<f64> {
        Ok(self.evaluate(data)?.accuracy)
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::to_bytes(&[(CHECKPOINT_NAME, &self.net)])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_checkpoint(path, &[(CHECKPOINT_NAME, &self.net)])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = checkpoint::read_checkpoint(path)?;
        Ok(CnnModel {
            net: checkpoint::take_net(&mut nets, CHECKPOINT_NAME)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
        }
        s
    }
}

/// Trains a fresh detector by mini-batch Adam on cross-entropy.
pub fn train_cnn(train: &[LabeledImage], config: &CnnConfig) -> Result<(CnnModel, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let counts = count_labels(train.iter().map(|t| &t.label));
    if counts.contains(&0) {
        return Err(Error::Dataset("training set needs both classes".into()));
    }
    if let Some(bad) = train.iter().find(|t| t.image.side() != config.input_side) {
        return Err(Error::SideMismatch {
            expected: config.input_side,
            got: bad.image.side(),
        });
    }
    let mut model = build_cnn_for(config.input_side, config.rng_seed)?;
    let mut optimizer = OptimizerState::adam(config.learning_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&BinaryImage> = batch.iter().map(|&i| &train[i].image).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| train[i].label.index()).collect();
            model.net.zero_grad();
            let probs = model
                .net
                .forward(&images_to_tensor(&images)?, Mode::Train)?;
            let (loss, grad) = cross_entropy_batch(&probs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    iteration: epoch * order.len().div_ceil(config.batch_size),
                });
            }
            model.net.backward(&grad)?;
            optimizer.step(&mut model.net.params_mut())?;
            loss_sum += loss * batch.len() as f64;
            correct += probs
                .data()
                .chunks_exact(2)
                .zip(&targets)
                .filter(|(p, &t)| Prediction::from_probs(p).label.index() == t)
                .count();
        }
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / train.len() as f64,
            accuracy: correct as f64 / train.len() as f64,
        });
    }
    Ok((model, history))
}

/// Fold index for every sample. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[Label], fold_count: usize, seed: u64) -> Result<Vec<usize>> {
    if fold_count == 0 || labels.len() < fold_count {
        return Err(Error::Dataset(format!(
            "{} samples cannot fill {fold_count} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; labels.len()];
    let mut next = 0usize;
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % fold_count;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub train_size: usize,
    pub validation_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
}

/// Stratified k-fold cross-validation. Fold `i` trains with seed
/// `rng_seed + i`.
pub fn kfold_cv(dataset: &[LabeledImage], config: &CnnConfig) -> Result<CvReport> {
    config.validate()?;
    let labels: Vec<Label> = dataset.iter().map(|d| d.label).collect();
    let assignment = stratified_folds(&labels, config.fold_count, config.rng_seed)?;
    let mut folds = Vec::with_capacity(config.fold_count);
    for f in 0..config.fold_count {
        let (val, train): (Vec<_>, Vec<_>) =
            dataset.iter().zip(&assignment).partition(|(_, &a)| a == f);
        let train: Vec<LabeledImage> = train.into_iter().map(|(d, _)| d.clone()).collect();
        let val: Vec<LabeledImage> = val.into_iter().map(|(d, _)| d.clone()).collect();
        let fold_config = CnnConfig {
            rng_seed: config.rng_seed.wrapping_add(f as u64),
            ..config.clone()
        };
        let (mut model, _) = train_cnn(&train, &fold_config)?;
        folds.push(FoldResult {
            fold: f,
            accuracy: model.accuracy(&val)?,
            train_size: train.len(),
            validation_size: val.len(),
        });
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(CvReport {
        folds,
        mean_accuracy,
    })
}
