use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::slottok::VOCAB_SIZE;

/// Architecture of the decoder-only Transformer.
///
/// The default is the published predictor: 1024-token context, 8-dim
/// embeddings, 3 decoder layers with 8 heads (head dim 1), 4x feed-forward and
/// tied input/output embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub context_len: usize,
    pub vocab: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    /// Residual-branch dropout probability during training.
    pub dropout: f32,
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_len: 1024,
            vocab: VOCAB_SIZE,
            embed_dim: 8,
            n_layers: 3,
            n_heads: 8,
            ff_dim: 32,
            dropout: 0.0,
            tie_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn with_context(mut self, context_len: usize) -> Self {
        self.context_len = context_len;
        self
    }

    pub fn with_layers(mut self, n_layers: usize) -> Self {
        self.n_layers = n_layers;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.vocab != VOCAB_SIZE {
            return fail(format!("vocab must be {VOCAB_SIZE}, got {}", self.vocab));
        }
        if self.context_len == 0 || self.embed_dim == 0 || self.n_heads == 0 || self.ff_dim == 0 {
            return fail("dimensions must be positive".into());
        }
        if self.n_layers == 0 {
            return fail("at least one layer is required".into());
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return fail(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
