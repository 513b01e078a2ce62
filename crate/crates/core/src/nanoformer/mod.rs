//! A tiny decoder-only Transformer over the slot vocabulary, written from
//! scratch with a manual backward pass.
//!
//! The model is generic over [`Scalar`]: training uses `f32`, gradient checks
//! use `f64`.

mod checkpoint;
mod config;
mod model;
mod ops;
mod params;
mod sample;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use config::ModelConfig;
pub use model::{forward, loss, loss_and_grads, Decoder, Logits};
pub use params::{count_excluding_positions, LayerLayout, ModelParams, ParamLayout};
pub use sample::{
    sample_slot, MaskProvider, SampleError, SampledSlot, SamplerConfig, SamplingMode,
};
pub use train::{split_index, train, LossRecord, TrainConfig, TrainError, TrainOutcome};

/// Floating-point element type of parameters and activations.
pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("empty input")]
    EmptyInput,
    #[error("input of {len} tokens exceeds the context of {context}")]
    TooLong { len: usize, context: usize },
    #[error("inputs and targets differ in shape")]
    ShapeMismatch,
    #[error("training loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("corpus of {tokens} tokens is too short for {needed}-token windows")]
    InsufficientData { tokens: usize, needed: usize },
}
