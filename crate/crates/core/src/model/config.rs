use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions and switches of a TP-Transformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden size `d_z`.
    pub d_model: usize,
    /// Feed-forward inner size `d_f`.
    pub d_ff: usize,
    pub heads: usize,
    /// Vocabulary size `d_v`.
    pub vocab_size: usize,
    /// Layer count of the encoder and of the decoder.
    pub layers: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    /// `false` replaces every role vector by ones, giving a standard Transformer.
    pub role_binding: bool,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// `d_model=512, d_ff=2048, heads=8, layers=6` with 72 symbols.
    pub fn full_scale() -> Self {
        Self {
            d_model: 512,
            d_ff: 2048,
            heads: 8,
            vocab_size: 72,
            layers: 6,
            max_src_len: 160,
            max_tgt_len: 32,
            role_binding: true,
            ln_eps: 1e-5,
        }
    }

    /// Desk-scale model: `d_model=64, heads=4, layers=2`, `d_ff = 4·d_model`.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            d_ff: 256,
            heads: 4,
            vocab_size,
            layers: 2,
            max_src_len: 64,
            max_tgt_len: 32,
            role_binding: true,
            ln_eps: 1e-5,
        }
    }

    /// Gradient-check scale: `d_model=16, heads=2, layers=2`.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            d_model: 16,
            d_ff: 64,
            heads: 2,
            layers: 2,
            ..Self::desk(vocab_size)
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("heads", self.heads),
            ("vocab_size", self.vocab_size),
            ("layers", self.layers),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        Ok(())
    }
}
