//! The TP-Transformer encoder–decoder.

mod config;
pub mod layers;
pub mod params;
mod trace;

pub use config::ModelConfig;
pub use layers::{
    attention_mask, compute_alpha, decoder_cell, embed_input, encoder_cell, output_logits,
    sinusoidal_positions, tpmha, Attend, AttnDims, DecoderMasks, TraceTarget,
};
pub use params::{init_params, random_point, ModelParams, ParamVars};
pub use trace::{AttentionTrace, HeadTrace, NormalizationReport, Site};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Right-padded token matrix `[batch × len]` with per-row unpadded lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub batch: usize,
    pub len: usize,
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn new(ids: Vec<usize>, batch: usize, len: usize, lengths: Vec<usize>) -> Result<Self> {
        if ids.len() != batch * len || lengths.len() != batch || batch == 0 || len == 0 {
            return Err(Error::dim(
                "token batch",
                &[batch, len],
                &[ids.len(), lengths.len()],
            ));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > len) {
            return Err(Error::Length(format!("row length {bad} outside 1..={len}")));
        }
        Ok(Self {
            ids,
            batch,
            len,
            lengths,
        })
    }

    /// A batch holding one unpadded sequence.
    pub fn single(ids: &[usize]) -> Result<Self> {
        Self::new(ids.to_vec(), 1, ids.len(), vec![ids.len()])
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..b * self.len + self.lengths[b]]
    }
}

/// Graph handles produced by one full forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// Final encoder states `[batch·src_len, d_model]`.
    pub encoder: Var,
    /// Final decoder states `[batch·tgt_len, d_model]`.
    pub decoder: Var,
    /// `[batch·tgt_len, vocab]`.
    pub logits: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TpTransformer {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl TpTransformer {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(Self { config, params })
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ParamVars {
        ParamVars::bind(g, &self.params, trainable)
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        src: &TokenBatch,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var> {
        let cfg = &self.config;
        if src.len > cfg.max_src_len {
            return Err(Error::Length(format!(
                "source length {} exceeds {}",
                src.len, cfg.max_src_len
            )));
        }
        let mask = attention_mask(src.batch, cfg.heads, src.len, src.len, &src.lengths, false);
        let mut z = embed_input(g, cfg, p, src)?;
        for l in 0..cfg.layers {
            z = encoder_cell(g, cfg, p, l, z, src, &mask, trace.as_deref_mut())?;
        }
        Ok(z)
    }

    pub fn decode(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        enc_final: Var,
        src: &TokenBatch,
        tgt_in: &TokenBatch,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var> {
        let cfg = &self.config;
        if tgt_in.len > cfg.max_tgt_len {
            return Err(Error::Length(format!(
                "target length {} exceeds {}",
                tgt_in.len, cfg.max_tgt_len
            )));
        }
        if tgt_in.batch != src.batch {
            return Err(Error::dim("decode batch", &[src.batch], &[tgt_in.batch]));
        }
        let masks = DecoderMasks::new(cfg, src, tgt_in);
        let mut z = embed_input(g, cfg, p, tgt_in)?;
        for l in 0..cfg.layers {
            z = decoder_cell(
                g,
                cfg,
                p,
                l,
                z,
                enc_final,
                src,
                tgt_in,
                &masks,
                trace.as_deref_mut(),
            )?;
        }
        Ok(z)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        src: &TokenBatch,
        tgt_in: &TokenBatch,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Forward> {
        let encoder = self.encode(g, p, src, trace.as_deref_mut())?;
        let decoder = self.decode(g, p, encoder, src, tgt_in, trace)?;
        let logits = output_logits(g, p, decoder)?;
        Ok(Forward {
            encoder,
            decoder,
            logits,
        })
    }
}
