use rand::seq::SliceRandom;

use super::vocab::{Vocabulary, EOS, PAD, SOS};
use super::Sample;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TokenBatch};
use crate::rng::{self, streams};

/// A tokenized sample: `src` is the question plus `EOS`, `answer` holds the
/// answer characters only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSample {
    pub src: Vec<usize>,
    pub answer: Vec<usize>,
}

impl EncodedSample {
    /// Teacher-forcing input `SOS ++ answer`.
    pub fn tgt_in(&self) -> Vec<usize> {
        std::iter::once(SOS)
            .chain(self.answer.iter().copied())
            .collect()
    }

    /// Prediction target `answer ++ EOS`.
    pub fn tgt_out(&self) -> Vec<usize> {
        self.answer
            .iter()
            .copied()
            .chain(std::iter::once(EOS))
            .collect()
    }
}

/// One padded training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub src: TokenBatch,
    pub tgt_in: TokenBatch,
    /// `[batch × tgt_in.len]`, right-padded with `PAD`.
    pub tgt_out: Vec<usize>,
    /// True on real source tokens.
    pub src_mask: Vec<bool>,
    /// True on real target tokens, false exactly on padding.
    pub loss_mask: Vec<bool>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.src.batch
    }
}

/// Tokenizes samples, enforcing the model's length limits.
pub fn encode_samples(
    samples: &[Sample],
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<Vec<EncodedSample>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.answer.is_empty() {
                return Err(Error::Length(format!("sample {i} has an empty answer")));
            }
            let src = vocab.encode(&s.question)?;
            let answer = vocab.encode_chars(&s.answer)?;
            if src.len() > cfg.max_src_len || answer.len() + 1 > cfg.max_tgt_len {
                return Err(Error::Length(format!(
                    "sample {i} ({:?} → {:?}) exceeds source limit {} or target limit {}",
                    s.question, s.answer, cfg.max_src_len, cfg.max_tgt_len
                )));
            }
            Ok(EncodedSample { src, answer })
        })
        .collect()
}

fn pad_rows(rows: &[Vec<usize>]) -> Result<(TokenBatch, Vec<bool>)> {
    let len = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(rows.len() * len);
    let mut mask = Vec::with_capacity(rows.len() * len);
    for r in rows {
        ids.extend_from_slice(r);
        ids.extend(std::iter::repeat_n(PAD, len - r.len()));
        mask.extend((0..len).map(|j| j < r.len()));
    }
    let lengths = rows.iter().map(Vec::len).collect();
    Ok((TokenBatch::new(ids, rows.len(), len, lengths)?, mask))
}

/// Pads a group of samples into one batch.
pub fn collate(samples: &[&EncodedSample]) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Config("cannot collate an empty batch".into()));
    }
    let src: Vec<_> = samples.iter().map(|s| s.src.clone()).collect();
    let tin: Vec<_> = samples.iter().map(|s| s.tgt_in()).collect();
    let tout: Vec<_> = samples.iter().map(|s| s.tgt_out()).collect();
    let (src, src_mask) = pad_rows(&src)?;
    let (tgt_in, _) = pad_rows(&tin)?;
    let (tgt_out, loss_mask) = pad_rows(&tout)?;
    Ok(Batch {
        src,
        tgt_in,
        tgt_out: tgt_out.ids,
        src_mask,
        loss_mask,
    })
}

/// Splits samples into padded batches of at most `batch_size`, shuffled by
/// `seed` when given and in file order otherwise.
pub fn make_batches(
    samples: &[Sample],
    vocab: &Vocabulary,
    batch_size: usize,
    cfg: &ModelConfig,
    seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let encoded = encode_samples(samples, vocab, cfg)?;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut rng::stream(seed, streams::SHUFFLE));
    }
    order
        .chunks(batch_size)
        .map(|idx| collate(&idx.iter().map(|&i| &encoded[i]).collect::<Vec<_>>()))
        .collect()
}
