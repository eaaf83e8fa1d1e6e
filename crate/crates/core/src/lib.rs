//! Malware-behavior visualization: count tables rendered as two-color
//! images, class rebalancing by SMOTE or a conditional GAN, and a small CNN
//! detector built on a from-scratch neural-network engine.

pub mod cgan;
pub mod cnn;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pgm;
pub mod pipeline;
pub mod prs;
pub mod smote;
pub mod synth;

pub use dataset::LabeledImage;
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use pipeline::PipelineConfig;
pub use prs::{BinaryImage, Label, Pixel, PrsLayout, SampleRecord};
