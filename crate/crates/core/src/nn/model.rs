use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{Layer, LayerSpec, Mode};
use crate::nn::tensor::Tensor;

/// A stack of layers applied in order to a batch.
#[derive(Debug, Clone)]
pub struct Sequential {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

impl Sequential {
    /// `input_shape` is per item (no batch dimension).
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        specs: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut shape = input_shape.clone();
        for spec in specs {
            layers.push(spec.build(&shape, rng)?);
            shape = spec.output_shape(&shape)?;
            shapes.push(shape.clone());
        }
        Ok(Sequential {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, Vec::as_slice)
    }

    /// Per-item output shape after every layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        if input.shape().len() != self.input_shape.len() + 1
            || input.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::shape(
                "model input",
                format!(
                    "expected [batch, {:?}], got {:?}",
                    self.input_shape,
                    input.shape()
                ),
            ));
        }
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else {
            return Ok(input.clone());
        };
        let mut x = first.forward(input, mode)?;
        for layer in layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    /// Backpropagates `grad_out` (gradient of the loss with respect to the
    /// last forward output), accumulating into every parameter's gradient.
    /// Returns the gradient with respect to the model input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn state(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::state).collect()
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::state_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
