//! Synthetic minority oversampling.
//!
//! Each new sample sits on the segment between a minority sample and one of
//! its `k` nearest minority neighbors: `t + (t' - t) * alpha` with
//! `alpha ~ U[0, 1)`. Base samples are visited round-robin, neighbors are
//! found by exhaustive Euclidean search, and components are rounded to the
//! nearest non-negative integer so the result can be encoded as an image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prs::SampleRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority size after oversampling. `None` means "match the majority".
    pub target_count: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_count: None,
            rng_seed: 0,
        }
    }
}

/// A synthetic sample together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub record: SampleRecord,
    pub base_index: usize,
    pub neighbor_index: usize,
    pub alpha: f64,
}

fn squared_distance(a: &[u64], b: &[u64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Indices of the `k` nearest other samples of every sample, closest first.
/// Equal distances go to the lower index.
pub fn nearest_neighbors(points: &[&[u64]], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(points[i], points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| dist[i * n + a].total_cmp(&dist[i * n + b]).then(a.cmp(&b)));
            order.truncate(k);
            order
        })
        .collect()
}

/// `t + (t' - t) * alpha`, rounded to the nearest non-negative integer.
pub fn interpolate(base: &[u64], neighbor: &[u64], alpha: f64) -> Vec<u64> {
    base.iter()
        .zip(neighbor)
        .map(|(&t, &n)| {
            let t = t as f64;
            let v = t + (n as f64 - t) * alpha;
            v.round().max(0.0) as u64
        })
        .collect()
}

fn validate(minority: &[SampleRecord], config: &SmoteConfig) -> Result<usize> {
    if config.k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    if minority.len() <= config.k_neighbors {
        return Err(Error::TooFewSamples {
            k: config.k_neighbors,
            got: minority.len(),
        });
    }
    let dim = minority[0].dim();
    if let Some(bad) = minority.iter().find(|s| s.dim() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let label = minority[0].label;
    if minority.iter().any(|s| s.label != label) {
        return Err(Error::Dataset(
            "minority samples carry more than one label".into(),
        ));
    }
    let target = config.target_count.unwrap_or(minority.len());
    if target < minority.len() {
        return Err(Error::Config(format!(
            "target_count {target} is below the current minority size {}",
            minority.len()
        )));
    }
    Ok(target - minority.len())
}

/// Like [`smote_oversample`] but keeps the provenance of every new sample.
pub fn smote_oversample_traced(
    minority: &[SampleRecord],
    config: &SmoteConfig,
) -> Result<Vec<SyntheticSample>> {
    let needed = validate(minority, config)?;
    if needed == 0 {
        return Ok(Vec::new());
    }
    let points: Vec<&[u64]> = minority.iter().map(|s| s.values.as_slice()).collect();
    let neighbors = nearest_neighbors(&points, config.k_neighbors);
    let label = minority[0].label;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let out = (0..needed)
        .map(|i| {
            let base_index = i % minority.len();
            let candidates = &neighbors[base_index];
            let neighbor_index = candidates[rng.random_range(0..candidates.len())];
            let alpha: f64 = rng.random();
            SyntheticSample {
                record: SampleRecord {
                    values: interpolate(points[base_index], points[neighbor_index], alpha),
                    label,
                },
                base_index,
                neighbor_index,
                alpha,
            }
        })
        .collect();
    Ok(out)
}

/// Creates `target_count - minority.len()` synthetic minority samples.
pub fn smote_oversample(
    minority: &[SampleRecord],
    config: &SmoteConfig,
) -> Result<Vec<SampleRecord>> {
    Ok(smote_oversample_traced(minority, config)?
        .into_iter()
        .map(|s| s.record)
        .collect())
}

/// Oversamples the smaller class of `samples` up to the size of the larger
/// one and returns the combined, balanced set (originals first).
pub fn balance_with_smote(
    samples: &[SampleRecord],
    config: &SmoteConfig,
) -> Result<Vec<SampleRecord>> {
    let counts = crate::dataset::count_labels(samples.iter().map(|s| &s.label));
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Dataset("both classes are needed to balance".into()));
    }
    let minority_label = if counts[1] < counts[0] {
        crate::prs::Label::Malign
    } else {
        crate::prs::Label::Benign
    };
    let minority: Vec<SampleRecord> = samples
        .iter()
        .filter(|s| s.label == minority_label)
        .cloned()
        .collect();
    let config = SmoteConfig {
        target_count: Some(counts[0].max(counts[1])),
        ..config.clone()
    };
    let mut out = samples.to_vec();
    out.extend(smote_oversample(&minority, &config)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prs::Label;

    fn rec(values: Vec<u64>) -> SampleRecord {
        SampleRecord {
            values,
            label: Label::Malign,
        }
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = vec![3, 0, 100];
        let b = vec![10, 5, 1];
        assert_eq!(interpolate(&a, &b, 0.0), a);
        assert_eq!(interpolate(&a, &b, 1.0), b);
        assert_eq!(interpolate(&[0; 4], &[4; 4], 0.5), vec![2; 4]);
    }

    #[test]
    fn count_matches_target() {
        let minority: Vec<_> = (0..20).map(|i| rec(vec![i, 2 * i])).collect();
        let cfg = SmoteConfig {
            target_count: Some(57),
            ..Default::default()
        };
        let out = smote_oversample(&minority, &cfg).unwrap();
        assert_eq!(out.len(), 37);
        assert!(out.iter().all(|s| s.label == Label::Malign));
    }

    #[test]
    fn neighbors_break_ties_toward_lower_index() {
        let pts: Vec<Vec<u64>> = vec![vec![5], vec![4], vec![6], vec![3], vec![7]];
        let refs: Vec<&[u64]> = pts.iter().map(Vec::as_slice).collect();
        let nn = nearest_neighbors(&refs, 2);
        assert_eq!(nn[0], vec![1, 2]);
        assert_eq!(nn[1], vec![0, 3]);
    }

    #[test]
    fn errors() {
        let few: Vec<_> = (0..5).map(|i| rec(vec![i])).collect();
        assert!(matches!(
            smote_oversample(&few, &SmoteConfig::default()),
            Err(Error::TooFewSamples { k: 5, got: 5 })
        ));
        let mut mixed: Vec<_> = (0..8).map(|i| rec(vec![i, i])).collect();
        mixed.push(rec(vec![1]));
        assert!(matches!(
            smote_oversample(&mixed, &SmoteConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
        let ok: Vec<_> = (0..8).map(|i| rec(vec![i])).collect();
        let cfg = SmoteConfig {
            target_count: Some(3),
            ..Default::default()
        };
        assert!(matches!(smote_oversample(&ok, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let minority: Vec<_> = (0..30).map(|i| rec(vec![i * i, 100 - i, i % 7])).collect();
        let cfg = SmoteConfig {
            target_count: Some(100),
            rng_seed: 9,
            ..Default::default()
        };
        assert_eq!(
            smote_oversample(&minority, &cfg).unwrap(),
            smote_oversample(&minority, &cfg).unwrap()
        );
    }

    #[test]
    fn balancing_tops_up_the_smaller_class() {
        let mut samples: Vec<_> = (0..30)
            .map(|i| SampleRecord {
                values: vec![i],
                label: Label::Benign,
            })
            .collect();
        samples.extend((0..12).map(|i| rec(vec![i + 50])));
        let balanced = balance_with_smote(&samples, &SmoteConfig::default()).unwrap();
        assert_eq!(
            crate::dataset::count_labels(balanced.iter().map(|s| &s.label)),
            [30, 30]
        );
    }
}
