//! Synthetic labeled behavior-count tables.
//!
//! This is a stand-in for a real collection of app traces. Each time window
//! is nonzero with a class-specific probability and, when nonzero, carries
//! a log-normal count around a class-specific scale. Malign samples are
//! denser and larger, so their images hold more black pixels that reach
//! further toward the middle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prs::{Label, SampleRecord};

/// Largest count the generator emits; fits the fundamental 32-digit budget.
pub const MAX_COUNT: u64 = (1 << 32) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_benign: usize,
    pub n_malign: usize,
    pub j: usize,
    pub benign_sparsity: f64,
    pub malign_sparsity: f64,
    pub benign_scale: f64,
    pub malign_scale: f64,
    /// Standard deviation of the underlying normal for nonzero counts.
    pub log_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_benign: 3000,
            n_malign: 1465,
            j: 128,
            benign_sparsity: 0.15,
            malign_sparsity: 0.45,
            benign_scale: 20.0,
            malign_scale: 2000.0,
            log_sigma: 1.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.j == 0 {
            return Err(Error::Config("j must be at least 1".into()));
        }
        if !unit(self.benign_sparsity) || !unit(self.malign_sparsity) {
            return Err(Error::Config("sparsities must lie in [0, 1]".into()));
        }
        if self.malign_sparsity <= self.benign_sparsity {
            return Err(Error::Config(
                "malign_sparsity must exceed benign_sparsity".into(),
            ));
        }
        if !(self.benign_scale > 0.0) || self.malign_scale <= self.benign_scale {
            return Err(Error::Config(
                "scales must be positive with malign_scale > benign_scale".into(),
            ));
        }
        if !(self.log_sigma >= 0.0 && self.log_sigma.is_finite()) {
            return Err(Error::Config(
                "log_sigma must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    fn class_params(&self, label: Label) -> (f64, f64) {
        match label {
            Label::Benign => (self.benign_sparsity, self.benign_scale),
            Label::Malign => (self.malign_sparsity, self.malign_scale),
        }
    }
}

/// Generates `n_benign` benign samples followed by `n_malign` malign ones.
/// Sample `i` draws from its own ChaCha stream, so any subset can be
/// regenerated independently.
pub fn gen_dataset(config: &SynthConfig) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let labels = std::iter::repeat_n(Label::Benign, config.n_benign)
        .chain(std::iter::repeat_n(Label::Malign, config.n_malign));
    labels
        .enumerate()
        .map(|(i, label)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(i as u64);
            let (sparsity, scale) = config.class_params(label);
            let magnitude = LogNormal::new(scale.ln(), config.log_sigma)
                .map_err(|e| Error::Config(format!("log-normal parameters: {e}")))?;
            let values = (0..config.j)
                .map(|_| {
                    if rng.random_bool(sparsity) {
                        (magnitude.sample(&mut rng).round() as u64).clamp(1, MAX_COUNT)
                    } else {
                        0
                    }
                })
                .collect();
            Ok(SampleRecord { values, label })
        })
        .collect()
}

/// Moves `test_per_class` randomly chosen samples of each class into a test
/// set. Both halves keep the original relative order.
pub fn split_train_test(
    dataset: &[SampleRecord],
    test_per_class: usize,
    seed: u64,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; dataset.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset[i].label == label)
            .collect();
        if idx.len() < test_per_class {
            return Err(Error::Dataset(format!(
                "{label} has {} samples, {test_per_class} needed for the test set",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..test_per_class] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) =
        dataset.iter().cloned().zip(in_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(s, _)| s).collect(),
        test.into_iter().map(|(s, _)| s).collect(),
    ))
}
