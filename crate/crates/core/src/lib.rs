//! A recurrent question-answering network whose state is an order-3 tensor
//! product representation, trained with a small reverse-mode autodiff engine
//! on bAbI-style story/question/answer data.
//!
//! Module map:
//! - [`tensor`]: dense tensors, outer products and contractions
//! - [`autodiff`]: tape-based gradients and the `Backend` abstraction
//! - [`encoder`]: vocabulary and position-weighted sentence encoding
//! - [`model`]: update and inference modules
//! - [`optimizer`]: Nadam and the learning-rate schedule
//! - [`data`]: parsing, batching, a task generator and the systematic
//!   generalisation augmenter
//! - [`trainer`]: training loop, evaluation, checkpoints
//! - [`analysis`]: representation similarity and clustering

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod encoder;
pub mod model;
pub mod optimizer;
pub mod tensor;
pub mod trainer;

pub use encoder::Vocabulary;
pub use model::{AblationConfig, ModelDims, ModelParams, TprRnn};
pub use tensor::Tensor;
pub use trainer::{Checkpoint, TrainConfig};
