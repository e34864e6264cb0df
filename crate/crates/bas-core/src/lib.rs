//! Answer-selection pipeline: expected-answer-type highlighting, a
//! from-scratch transformer encoder with reverse-mode differentiation, four
//! classifier heads, cross-entropy training, and MAP/MRR ranking evaluation.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
