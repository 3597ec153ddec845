use serde::{Deserialize, Serialize};

use crate::data::{collate, encode_samples, Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{AttentionTrace, Site, TpTransformer};
use crate::tensor::Graph;

/// Role vector of one encoder position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleRecord {
    pub sample: usize,
    pub position: usize,
    pub layer: usize,
    pub head: usize,
    pub role: Vec<f64>,
    pub symbol: String,
}

/// Everything captured from one layer/head over a set of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    pub layer: usize,
    pub head: usize,
    /// Encoder self-attention roles, one per unpadded source position.
    pub records: Vec<RoleRecord>,
    /// Attention of the selected layer/head at every site, with
    /// `batch_index` holding the sample index.
    pub trace: AttentionTrace,
    /// Source symbols per sample, `EOS` included.
    pub src_symbols: Vec<Vec<String>>,
    /// Teacher-forced decoder input symbols per sample, `SOS` included.
    pub tgt_symbols: Vec<Vec<String>>,
}

impl TraceSet {
    pub fn roles(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.role.clone()).collect()
    }
}

/// Runs teacher-forced forward passes and keeps the roles and attention of
/// one layer/head. The model is only read.
pub fn collect_traces(
    model: &TpTransformer,
    vocab: &Vocabulary,
    samples: &[Sample],
    layer: usize,
    head: usize,
) -> Result<TraceSet> {
    let cfg = &model.config;
    if layer >= cfg.layers || head >= cfg.heads {
        return Err(Error::Config(format!(
            "layer {layer}/head {head} outside {} layers × {} heads",
            cfg.layers, cfg.heads
        )));
    }
    let encoded = encode_samples(samples, vocab, cfg)?;
    let symbols = |ids: &[usize]| -> Vec<String> {
        ids.iter()
            .map(|&i| vocab.symbol(i).unwrap_or_default())
            .collect()
    };
    let mut set = TraceSet {
        layer,
        head,
        records: Vec::new(),
        trace: AttentionTrace::new(),
        src_symbols: encoded.iter().map(|e| symbols(&e.src)).collect(),
        tgt_symbols: encoded.iter().map(|e| symbols(&e.tgt_in())).collect(),
    };
    for (c, chunk) in encoded.chunks(64).enumerate() {
        let offset = c * 64;
        let batch = collate(&chunk.iter().collect::<Vec<_>>())?;
        let mut g = Graph::new();
        let p = model.bind(&mut g, false);
        let mut trace = AttentionTrace::new();
        model.forward(&mut g, &p, &batch.src, &batch.tgt_in, Some(&mut trace))?;
        for mut t in trace
            .heads
            .into_iter()
            .filter(|t| t.layer == layer && t.head == head)
        {
            t.batch_index += offset;
            if t.site == Site::EncoderSelf {
                for pos in 0..t.roles.rows() {
                    set.records.push(RoleRecord {
                        sample: t.batch_index,
                        position: pos,
                        layer,
                        head,
                        role: t.roles.row(pos).to_vec(),
                        symbol: set.src_symbols[t.batch_index][pos].clone(),
                    });
                }
            }
            set.trace.heads.push(t);
        }
    }
    Ok(set)
}
