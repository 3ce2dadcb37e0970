use serde::{Deserialize, Serialize};

use crate::corpus::{OpKind, VOCAB_SIZE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub context_window: usize,
    pub dropout_prob: f64,
}

impl ModelConfig {
    /// Small addition model: 3 layers, 3 heads, width 48, context 15.
    pub fn addition() -> Self {
        ModelConfig {
            num_layers: 3,
            num_heads: 3,
            d_model: 48,
            vocab_size: VOCAB_SIZE,
            context_window: 15,
            dropout_prob: 0.1,
        }
    }

    /// Multiplication model: 6 layers, 6 heads, width 192, context 19.
    pub fn multiplication() -> Self {
        ModelConfig {
            num_layers: 6,
            num_heads: 6,
            d_model: 192,
            vocab_size: VOCAB_SIZE,
            context_window: 19,
            dropout_prob: 0.1,
        }
    }

    pub fn preset(op: OpKind) -> Self {
        match op {
            OpKind::Add => Self::addition(),
            OpKind::Mul => Self::multiplication(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_heads == 0 || self.d_model == 0 {
            return Err(Error::Config("layers, heads and width must be positive".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.vocab_size != VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocab size must be {VOCAB_SIZE}, got {}",
                self.vocab_size
            )));
        }
        if self.context_window == 0 {
            return Err(Error::Config("context window must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }
}
