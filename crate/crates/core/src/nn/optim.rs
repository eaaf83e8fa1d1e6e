use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus per-parameter moment estimates.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            moments: Vec::new(),
            step: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` using their accumulated gradients.
    /// The parameter list must have the same layout on every call.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::shape(
                "optimizer",
                format!(
                    "{} parameter tensors, state tracks {}",
                    params.len(),
                    self.moments.len()
                ),
            ));
        }
        self.step += 1;
        for (slot, p) in params.iter_mut().enumerate() {
            let (values, grads) = p.data_and_grad_mut();
            let grads = grads
                .ok_or_else(|| Error::shape("optimizer", "parameter has no gradient buffer"))?;
            self.update_slot(slot, values, grads)?;
        }
        Ok(())
    }

    fn update_slot(&mut self, slot: usize, values: &mut [f64], grads: &[f64]) -> Result<()> {
        let (m, v) = &mut self.moments[slot];
        if values.len() != grads.len() || m.len() != values.len() {
            return Err(Error::shape(
                "optimizer",
                format!(
                    "slot {slot}: {} values, {} grads, {} moments",
                    values.len(),
                    grads.len(),
                    m.len()
                ),
            ));
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in values.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..values.len() {
                    let g = grads[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    values[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(value: f64, grad: f64) -> Tensor {
        let mut t = Tensor::param(vec![1], vec![value]).unwrap();
        t.grad_mut().unwrap()[0] = grad;
        t
    }

    #[test]
    fn sgd_step() {
        let mut p = param(1.0, 1.0);
        OptimizerState::sgd(0.1)
            .unwrap()
            .step(&mut [&mut p])
            .unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = param(1.0, 1.0);
        let mut opt = OptimizerState::adam(0.001).unwrap();
        opt.step(&mut [&mut p]).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [
            OptimizerState::sgd(0.5).unwrap(),
            OptimizerState::adam(0.5).unwrap(),
        ] {
            let mut p = param(3.0, 0.0);
            opt.step(&mut [&mut p]).unwrap();
            opt.step(&mut [&mut p]).unwrap();
            assert_eq!(p.data()[0], 3.0);
        }
    }

    #[test]
    fn layout_changes_are_rejected() {
        let mut opt = OptimizerState::adam(0.1).unwrap();
        let mut a = param(1.0, 1.0);
        let mut b = param(1.0, 1.0);
        opt.step(&mut [&mut a]).unwrap();
        assert!(opt.step(&mut [&mut a, &mut b]).is_err());
        let mut wide = Tensor::param(vec![2], vec![0.0; 2]).unwrap();
        assert!(opt.step(&mut [&mut wide]).is_err());
        assert!(OptimizerState::sgd(0.0).is_err());
    }
}
