//! Scoring of predicted slots: edit distances, per-channel precision and
//! box-plot summaries, plus the sampling-based scenario evaluation.

mod distance;
mod precision;
mod scenario;
mod stats;

use thiserror::Error;

use crate::nanoformer::SampleError;

pub use distance::{levenshtein, relative_levenshtein, DistanceResult};
pub use precision::{channel_precision, precision_csv, PrecisionRow};
pub use scenario::{
    box_stats_csv, evaluate_scenario, sample_seed, EmptySlotPredictor, EvalConfig, EvalReport,
    ModelPredictor, Prediction, Predictor, SampleRecord, CONTEXT_SLOTS, MAX_CONTEXT_TOKENS,
};
pub use stats::{BoxStats, TUKEY_FACTOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("{slots} complete slots available, at least {needed} required")]
    InsufficientData { slots: usize, needed: usize },
    #[error(transparent)]
    Sampling(#[from] SampleError),
}
