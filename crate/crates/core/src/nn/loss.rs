//! Batch-mean losses. Each returns the loss and its gradient with respect to
//! the predictions, so the gradient can be fed straight into
//! [`Sequential::backward`](crate::nn::Sequential::backward).

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Probabilities are clipped into `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `-ln p[target]` for one probability vector.
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -clip(probs[target]).ln()
}

/// `-(t ln p + (1 - t) ln(1 - p))` for one prediction.
pub fn binary_cross_entropy(pred: f64, target: f64) -> f64 {
    let p = clip(pred);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean categorical cross-entropy over a `[batch, classes]` probability tensor.
pub fn cross_entropy_batch(probs: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let &[b, c] = probs.shape() else {
        return Err(Error::shape(
            "cross_entropy",
            format!("expected [b,c], got {:?}", probs.shape()),
        ));
    };
    if targets.len() != b || targets.iter().any(|&t| t >= c) {
        return Err(Error::shape(
            "cross_entropy",
            "targets do not match the batch",
        ));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; b * c];
    for (i, &t) in targets.iter().enumerate() {
        let p = probs.data()[i * c + t];
        loss += cross_entropy(&probs.data()[i * c..(i + 1) * c], t);
        grad[i * c + t] = -1.0 / clip(p) / b as f64;
    }
    Ok((loss / b as f64, Tensor::new(vec![b, c], grad)?))
}

/// Mean binary cross-entropy over a `[batch, 1]` (or `[batch]`) tensor of
/// probabilities.
pub fn binary_cross_entropy_batch(preds: &Tensor, targets: &[f64]) -> Result<(f64, Tensor)> {
    let b = preds.len();
    if targets.len() != b {
        return Err(Error::shape(
            "binary_cross_entropy",
            "targets do not match the batch",
        ));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b);
    for (&p, &t) in preds.data().iter().zip(targets) {
        loss += binary_cross_entropy(p, t);
        let pc = clip(p);
        grad.push((-t / pc + (1.0 - t) / (1.0 - pc)) / b as f64);
    }
    Ok((loss / b as f64, Tensor::new(preds.shape().to_vec(), grad)?))
}
