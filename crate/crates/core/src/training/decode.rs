use crate::data::{Sample, Vocabulary, EOS, PAD, SOS};
use crate::error::{Error, Result};
use crate::model::{output_logits, TokenBatch, TpTransformer};
use crate::tensor::Graph;

/// Sources decoded together; bounds the memory of one inference graph.
const CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    /// Emitted symbols, without `SOS` and the final `EOS`.
    pub ids: Vec<usize>,
    pub text: String,
    /// True when `max_steps` ran out before `EOS`.
    pub truncated: bool,
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Batched greedy decoding of already tokenized sources (each ending in
/// `EOS`). Returns the emitted ids and a truncation flag per source.
pub fn greedy_decode_ids(
    model: &TpTransformer,
    sources: &[Vec<usize>],
    max_steps: usize,
) -> Result<Vec<(Vec<usize>, bool)>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(CHUNK) {
        out.extend(decode_chunk(model, chunk, max_steps)?);
    }
    Ok(out)
}

fn decode_chunk(
    model: &TpTransformer,
    sources: &[Vec<usize>],
    max_steps: usize,
) -> Result<Vec<(Vec<usize>, bool)>> {
    let b = sources.len();
    let len = sources.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(b * len);
    for s in sources {
        ids.extend_from_slice(s);
        ids.extend(std::iter::repeat_n(PAD, len - s.len()));
    }
    let src = TokenBatch::new(ids, b, len, sources.iter().map(Vec::len).collect())?;

    let enc_value = {
        let mut g = Graph::new();
        let p = model.bind(&mut g, false);
        let enc = model.encode(&mut g, &p, &src, None)?;
        g.value(enc).clone()
    };
    let steps = max_steps.min(model.config.max_tgt_len);
    let mut prefixes: Vec<Vec<usize>> = vec![vec![SOS]; b];
    let mut done = vec![false; b];
    for step in 0..steps {
        let t = step + 1;
        let flat: Vec<usize> = prefixes.iter().flatten().copied().collect();
        let tgt = TokenBatch::new(flat, b, t, vec![t; b])?;
        // a fresh graph per step keeps memory flat in the prefix length
        let mut g = Graph::new();
        let p = model.bind(&mut g, false);
        let enc = g.input(enc_value.clone());
        let dec = model.decode(&mut g, &p, enc, &src, &tgt, None)?;
        let logits = output_logits(&mut g, &p, dec)?;
        let lv = g.value(logits);
        for row in 0..b {
            let next = if done[row] {
                PAD
            } else {
                argmax(lv.row(row * t + step))
            };
            if next == EOS {
                done[row] = true;
            }
            prefixes[row].push(next);
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    Ok(prefixes
        .into_iter()
        .zip(done)
        .map(|(p, d)| {
            let emitted = p[1..]
                .iter()
                .copied()
                .take_while(|&i| i != EOS && i != PAD)
                .collect();
            (emitted, !d)
        })
        .collect())
}

/// Greedy answer to one question, feeding back the most probable symbol
/// until `EOS` or `max_steps`.
pub fn greedy_decode(
    model: &TpTransformer,
    vocab: &Vocabulary,
    question: &str,
    max_steps: usize,
) -> Result<Decoded> {
    let src = vocab.encode(question)?;
    let (ids, truncated) = greedy_decode_ids(model, &[src], max_steps)?.remove(0);
    let text = vocab.decode(&ids)?;
    Ok(Decoded {
        ids,
        text,
        truncated,
    })
}

/// Fraction of samples whose greedy answer equals the reference exactly.
pub fn evaluate_exact_match(
    model: &TpTransformer,
    vocab: &Vocabulary,
    samples: &[Sample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config(
            "exact match over an empty sample list".into(),
        ));
    }
    let sources = samples
        .iter()
        .map(|s| vocab.encode(&s.question))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0usize;
    for (idx, chunk) in sources.chunks(CHUNK).enumerate() {
        let refs = &samples[idx * CHUNK..idx * CHUNK + chunk.len()];
        // an answer still running after its reference length plus EOS cannot match
        let steps = refs
            .iter()
            .map(|s| s.answer.chars().count() + 1)
            .max()
            .unwrap_or(1);
        for (s, (ids, truncated)) in refs.iter().zip(decode_chunk(model, chunk, steps)?) {
            if !truncated && vocab.decode(&ids)? == s.answer {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}
