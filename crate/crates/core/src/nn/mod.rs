//! A small reverse-mode neural-network engine in `f64`.
//!
//! Layers cache their forward inputs and expose an explicit `backward`.
//! A [`Sequential`] model chains them; losses return their own gradients so
//! callers drive backpropagation directly, which is what adversarial
//! training needs (gradients flow through a frozen discriminator into the
//! generator).

pub mod checkpoint;
mod gemm;
pub mod gradcheck;
pub mod layers;
pub mod loss;
mod model;
pub mod ops;
pub mod optim;
mod tensor;

pub use layers::{Layer, LayerSpec, Mode};
pub use model::Sequential;
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
