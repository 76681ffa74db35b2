//! Hierarchical autoregressive discrete autoencoders for raw audio.
//!
//! The crate trains VQ and argmax autoencoders with dilated-convolution
//! encoders and autoregressive decoders, stacks them into multi-level
//! pipelines, and ships the diagnostics (reconstruction NLL, codebook
//! perplexity, predictability profiles) plus a population-based training
//! scheduler. Everything runs on CPU over f32 buffers with a small
//! reverse-mode tape.

pub mod ada;
pub mod audio;
pub mod presets;
pub mod quantize;
pub mod sampling;
pub mod stack;
pub mod check;
pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Graph, NodeId, PadMode, Tensor};
