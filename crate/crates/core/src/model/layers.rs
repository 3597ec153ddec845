//! Building blocks of the encoder and decoder, operating on batches of
//! right-padded sequences flattened to `[batch·len, d_model]`.

use super::params::{self, ParamVars};
use super::trace::{AttentionTrace, HeadTrace, Site};
use super::{ModelConfig, TokenBatch};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Mask, Tensor, Var};

/// `[t × d]` sinusoidal position codes, positions counted from 0:
/// `p[t][2i] = sin(t / 10000^(2i/d))`, `p[t][2i+1] = cos(t / 10000^(2i/d))`.
pub fn sinusoidal_positions(t: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; t * d];
    for pos in 0..t {
        for j in 0..d {
            let pair = (j / 2) * 2;
            let angle = pos as f64 / 10000f64.powf(pair as f64 / d as f64);
            data[pos * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![t, d], data).expect("positive dims")
}

/// Shape information for one attention call.
#[derive(Clone, Copy, Debug)]
pub struct AttnDims<'a> {
    pub batch: usize,
    pub q_len: usize,
    pub kv_len: usize,
    /// Unpadded query lengths, used to crop traces.
    pub q_lengths: &'a [usize],
    pub kv_lengths: &'a [usize],
}

/// Where the attention weights of [`tpmha`] come from.
pub enum Attend<'a> {
    /// Softmax of scaled query–key products under the given mask.
    Masked(&'a Mask),
    /// Precomputed `[batch·heads, q_len, kv_len]` weights.
    Frozen(Var),
}

/// Trace destination plus the layer/site labels of the current call.
pub struct TraceTarget<'a> {
    pub sink: &'a mut AttentionTrace,
    pub layer: usize,
    pub site: Site,
}

fn affine(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul_nt(x, w)?;
    g.add_bias(y, b)
}

/// `[b·t, h·dk]` → `[b·h, t, dk]`.
fn split_heads(g: &mut Graph, x: Var, b: usize, t: usize, h: usize, dk: usize) -> Result<Var> {
    let x = g.reshape(x, &[b, t, h, dk])?;
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, &[b * h, t, dk])
}

/// `[b·h, t, dk]` → `[b·t, h·dk]`.
fn merge_heads(g: &mut Graph, x: Var, b: usize, t: usize, h: usize, dk: usize) -> Result<Var> {
    let x = g.reshape(x, &[b, h, t, dk])?;
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, &[b * t, h * dk])
}

/// Keep-mask over `[b·h, tq, tk]` allowing keys `j < kv_lengths[b]`, and
/// additionally `j ≤ i` when `causal`.
pub fn attention_mask(
    batch: usize,
    heads: usize,
    tq: usize,
    tk: usize,
    kv_lengths: &[usize],
    causal: bool,
) -> Mask {
    let mut keep = Vec::with_capacity(batch * heads * tq * tk);
    for b in 0..batch {
        for _ in 0..heads {
            for i in 0..tq {
                for j in 0..tk {
                    keep.push(j < kv_lengths[b] && (!causal || j <= i));
                }
            }
        }
    }
    Mask::new(&[batch * heads, tq, tk], keep).expect("mask size")
}

/// Role-bound input embedding:
/// `e = E·x·√d_model + p`, `r = W_p·e + b_p`, `z = e ⊙ r`
/// (just `e` without role binding).
pub fn embed_input(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &ParamVars,
    tokens: &TokenBatch,
) -> Result<Var> {
    let (b, t, d) = (tokens.batch, tokens.len, cfg.d_model);
    if let Some(&bad) = tokens.ids.iter().find(|&&i| i >= cfg.vocab_size) {
        return Err(Error::Vocabulary(format!(
            "token id {bad} out of range for vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let x = g.gather_columns(p.get(params::EMBEDDING), &tokens.ids)?;
    let x = g.scale(x, (d as f64).sqrt())?;
    let pos = sinusoidal_positions(t, d);
    let mut tiled = Vec::with_capacity(b * t * d);
    for _ in 0..b {
        tiled.extend_from_slice(pos.data());
    }
    let pos = g.input(Tensor::new(vec![b * t, d], tiled)?);
    let e = g.add(x, pos)?;
    if !cfg.role_binding {
        return Ok(e);
    }
    let r = affine(
        g,
        e,
        p.get(params::INPUT_ROLE_W),
        p.get(params::INPUT_ROLE_B),
    )?;
    g.hadamard(e, r)
}

/// Attention weights `softmax(q·kᵀ / √d_head)` over the key axis, for
/// `q: [G, tq, dk]` and `k: [G, tk, dk]`.
pub fn compute_alpha(g: &mut Graph, q: Var, k: Var, mask: Option<&Mask>) -> Result<Var> {
    let dk = *g.shape(q).last().expect("rank-3 query");
    let logits = g.matmul_t(q, k, false, true)?;
    let logits = g.scale(logits, 1.0 / (dk as f64).sqrt())?;
    g.softmax(logits, mask)
}

/// TP multi-head attention. Queries and roles come from `queries`, keys and
/// values from `kv`; each head's filler `v̄` is bound to its role by `⊙` and
/// the heads are summed through their output maps:
/// `Σ_h [W_o^h (v̄_h ⊙ r_h) + b_o^h]`.
#[allow(clippy::too_many_arguments)]
pub fn tpmha(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &ParamVars,
    prefix: &str,
    queries: Var,
    kv: Var,
    dims: AttnDims<'_>,
    attend: Attend<'_>,
    trace: Option<TraceTarget<'_>>,
) -> Result<Var> {
    let (h, dk) = (cfg.heads, cfg.d_head());
    let AttnDims {
        batch: b,
        q_len: tq,
        kv_len: tk,
        ..
    } = dims;
    let w = |name: &str| p.get(&format!("{prefix}.{name}"));

    let q = affine(g, queries, w("w_q"), w("b_q"))?;
    let k = g.matmul_nt(kv, w("w_k"))?;
    let v = affine(g, kv, w("w_v"), w("b_v"))?;
    let qh = split_heads(g, q, b, tq, h, dk)?;
    let kh = split_heads(g, k, b, tk, h, dk)?;
    let vh = split_heads(g, v, b, tk, h, dk)?;

    let (alpha, mask) = match attend {
        Attend::Masked(mask) => (compute_alpha(g, qh, kh, Some(mask))?, Some(mask)),
        Attend::Frozen(alpha) => {
            if g.shape(alpha) != [b * h, tq, tk] {
                return Err(Error::dim("frozen alpha", g.shape(alpha), &[b * h, tq, tk]));
            }
            (alpha, None)
        }
    };
    let fillers = g.matmul(alpha, vh)?;
    let merged = merge_heads(g, fillers, b, tq, h, dk)?;
    let role = if cfg.role_binding {
        Some(affine(g, queries, w("w_r"), w("b_r"))?)
    } else {
        None
    };
    let bound = match role {
        Some(r) => g.hadamard(merged, r)?,
        None => merged,
    };
    let out = g.matmul_nt(bound, w("w_o"))?;
    let ones = g.input(Tensor::ones(&[1, h]));
    let bias = g.matmul(ones, w("b_o"))?;
    let bias = g.reshape(bias, &[cfg.d_model])?;
    let out = g.add_bias(out, bias)?;

    if let Some(target) = trace {
        let keep_all;
        let keep = match mask {
            Some(m) => m.keep(),
            None => {
                keep_all = vec![true; b * h * tq * tk];
                &keep_all
            }
        };
        capture(g, cfg, dims, alpha, keep, role, fillers, target);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn capture(
    g: &Graph,
    cfg: &ModelConfig,
    dims: AttnDims<'_>,
    alpha: Var,
    keep: &[bool],
    role: Option<Var>,
    fillers: Var,
    target: TraceTarget<'_>,
) {
    let (h, dk) = (cfg.heads, cfg.d_head());
    let (tq, tk) = (dims.q_len, dims.kv_len);
    let (av, fv) = (g.value(alpha).data(), g.value(fillers).data());
    let rv = role.map(|r| g.value(r).data());
    for b in 0..dims.batch {
        let (ql, kl) = (dims.q_lengths[b], dims.kv_lengths[b]);
        for head in 0..h {
            let gi = b * h + head;
            let mut alpha_c = Vec::with_capacity(ql * kl);
            let mut keep_c = Vec::with_capacity(ql * kl);
            for i in 0..ql {
                let base = (gi * tq + i) * tk;
                alpha_c.extend_from_slice(&av[base..base + kl]);
                keep_c.extend_from_slice(&keep[base..base + kl]);
            }
            let mut roles = Vec::with_capacity(ql * dk);
            let mut fill = Vec::with_capacity(ql * dk);
            for i in 0..ql {
                match rv {
                    Some(r) => {
                        let base = (b * tq + i) * h * dk + head * dk;
                        roles.extend_from_slice(&r[base..base + dk]);
                    }
                    None => roles.extend(std::iter::repeat_n(1.0, dk)),
                }
                let base = (gi * tq + i) * dk;
                fill.extend_from_slice(&fv[base..base + dk]);
            }
            target.sink.heads.push(HeadTrace {
                batch_index: b,
                layer: target.layer,
                head,
                site: target.site,
                alpha: Tensor::new(vec![ql, kl], alpha_c).expect("crop"),
                keep: keep_c,
                roles: Tensor::new(vec![ql, dk], roles).expect("crop"),
                fillers: Tensor::new(vec![ql, dk], fill).expect("crop"),
            });
        }
    }
}

/// `W_g · relu(W_f x + b_f) + b_g`.
pub fn feed_forward(g: &mut Graph, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let w = |name: &str| p.get(&format!("{prefix}.{name}"));
    let hidden = affine(g, x, w("w_f"), w("b_f"))?;
    let hidden = g.relu(hidden)?;
    affine(g, hidden, w("w_g"), w("b_g"))
}

pub fn layer_norm(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &ParamVars,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    g.layer_norm(
        x,
        p.get(&format!("{prefix}.gain")),
        p.get(&format!("{prefix}.bias")),
        cfg.ln_eps,
    )
}

/// One encoder cell:
/// `h = z + TPMHA(LN(z), LN(z))`, output `LN(h + FF(LN(h)))`.
pub fn encoder_cell(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &ParamVars,
    layer: usize,
    z: Var,
    src: &TokenBatch,
    mask: &Mask,
    trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let pre = format!("enc.{layer}");
    let dims = AttnDims {
        batch: src.batch,
        q_len: src.len,
        kv_len: src.len,
        q_lengths: &src.lengths,
        kv_lengths: &src.lengths,
    };
    let normed = layer_norm(g, cfg, p, &format!("{pre}.ln_attn"), z)?;
    let target = trace.map(|sink| TraceTarget {
        sink,
        layer,
        site: Site::EncoderSelf,
    });
    let attn = tpmha(
        g,
        cfg,
        p,
        &params::attn_prefix("enc", layer, "self"),
        normed,
        normed,
        dims,
        Attend::Masked(mask),
        target,
    )?;
    let h = g.add(z, attn)?;
    let normed = layer_norm(g, cfg, p, &format!("{pre}.ln_ff"), h)?;
    let ff = feed_forward(g, p, &format!("{pre}.ff"), normed)?;
    let out = g.add(h, ff)?;
    layer_norm(g, cfg, p, &format!("{pre}.ln_out"), out)
}

/// Masks for one decoder pass.
pub struct DecoderMasks {
    pub causal: Mask,
    pub cross: Mask,
}

impl DecoderMasks {
    pub fn new(cfg: &ModelConfig, src: &TokenBatch, tgt: &TokenBatch) -> Self {
        Self {
            causal: attention_mask(tgt.batch, cfg.heads, tgt.len, tgt.len, &tgt.lengths, true),
            cross: attention_mask(tgt.batch, cfg.heads, tgt.len, src.len, &src.lengths, false),
        }
    }
}

/// One decoder cell: causal TP self-attention, TP cross-attention over the
/// final encoder states (queries and roles from the decoder), then the
/// feed-forward sublayer; the final LN wraps only the feed-forward residual.
#[allow(clippy::too_many_arguments)]
pub fn decoder_cell(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &ParamVars,
    layer: usize,
    z: Var,
    enc_final: Var,
    src: &TokenBatch,
    tgt: &TokenBatch,
    masks: &DecoderMasks,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let pre = format!("dec.{layer}");
    let self_dims = AttnDims {
        batch: tgt.batch,
        q_len: tgt.len,
        kv_len: tgt.len,
        q_lengths: &tgt.lengths,
        kv_lengths: &tgt.lengths,
    };
    let cross_dims = AttnDims {
        batch: tgt.batch,
        q_len: tgt.len,
        kv_len: src.len,
        q_lengths: &tgt.lengths,
        kv_lengths: &src.lengths,
    };

    let normed = layer_norm(g, cfg, p, &format!("{pre}.ln_self"), z)?;
    let target = trace.as_deref_mut().map(|sink| TraceTarget {
        sink,
        layer,
        site: Site::DecoderSelf,
    });
    let attn = tpmha(
        g,
        cfg,
        p,
        &params::attn_prefix("dec", layer, "self"),
        normed,
        normed,
        self_dims,
        Attend::Masked(&masks.causal),
        target,
    )?;
    let h1 = g.add(z, attn)?;

    let normed = layer_norm(g, cfg, p, &format!("{pre}.ln_cross"), h1)?;
    let target = trace.map(|sink| TraceTarget {
        sink,
        layer,
        site: Site::DecoderCross,
    });
    let cross = tpmha(
        g,
        cfg,
        p,
        &params::attn_prefix("dec", layer, "cross"),
        normed,
        enc_final,
        cross_dims,
        Attend::Masked(&masks.cross),
        target,
    )?;
    let h2 = g.add(h1, cross)?;

    let normed = layer_norm(g, cfg, p, &format!("{pre}.ln_ff"), h2)?;
    let ff = feed_forward(g, p, &format!("{pre}.ff"), normed)?;
    let out = g.add(h2, ff)?;
    layer_norm(g, cfg, p, &format!("{pre}.ln_out"), out)
}

/// `logits = ẑ · E`, i.e. `Eᵀ ẑ` per row, with the shared embedding.
pub fn output_logits(g: &mut Graph, p: &ParamVars, z_hat: Var) -> Result<Var> {
    g.matmul(z_hat, p.get(params::EMBEDDING))
}
