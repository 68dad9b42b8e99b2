use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the causal sequence model and its optimizer.
///
/// `context_length` is the longest token sequence the model attends over.
/// Training windows hold `context_length - prediction_length` context tokens
/// followed by `prediction_length` target tokens, and the EOS label comes
/// after the last input position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub prediction_length: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 130,
            context_length: 128,
            prediction_length: 24,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 2,
            learning_rate: 1e-3,
            max_steps: 1000,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.embed_dim == 0 || self.num_heads == 0 || self.batch_size == 0 {
            return fail("embed_dim, num_heads and batch_size must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.prediction_length == 0 || self.prediction_length >= self.context_length {
            return fail(format!(
                "need 0 < prediction_length < context_length, got {} and {}",
                self.prediction_length, self.context_length
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Number of context tokens in a training window (and at inference).
    pub fn context_tokens(&self) -> usize {
        self.context_length - self.prediction_length
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}
