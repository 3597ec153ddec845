//! Plain-loop reference encoder–decoder used to cross-check the graph model.
//!
//! Everything here works on one unbatched, right-padded sequence with
//! `Vec<Vec<f64>>` rows and reads parameters by name, sharing no code with the
//! library's layers.

#![allow(dead_code)]

use tp_transformer::model::{TokenBatch, TpTransformer};
use tp_transformer::tensor::Tensor;

pub type Rows = Vec<Vec<f64>>;

pub struct Reference<'a> {
    pub model: &'a TpTransformer,
    /// Bind each head's output to its role vector.
    pub roles: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Reference<'a> {
    pub fn new(model: &'a TpTransformer) -> Self {
        Self {
            model,
            roles: model.config.role_binding,
        }
    }

    fn p(&self, name: &str) -> &Tensor {
        self.model
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    /// `W[rows] · x + b[rows]` for the row block `rows` of a `[out × in]` matrix.
    fn affine_rows(
        &self,
        w: &str,
        b: Option<&str>,
        x: &[f64],
        rows: std::ops::Range<usize>,
    ) -> Vec<f64> {
        let w = self.p(w);
        rows.map(|i| {
            let bias = b.map_or(0.0, |b| self.p(b).data()[i]);
            dot(w.row(i), x) + bias
        })
        .collect()
    }

    fn layer_norm(&self, prefix: &str, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let denom = (var + self.model.config.ln_eps).sqrt();
        let gain = self.p(&format!("{prefix}.gain")).data();
        let bias = self.p(&format!("{prefix}.bias")).data();
        x.iter()
            .enumerate()
            .map(|(i, v)| gain[i] * (v - mu) / denom + bias[i])
            .collect()
    }

    pub fn embed(&self, tokens: &[usize]) -> Rows {
        let d = self.model.config.d_model;
        let table = self.p("embedding");
        tokens
            .iter()
            .enumerate()
            .map(|(t, &id)| {
                let e: Vec<f64> = (0..d)
                    .map(|i| {
                        let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
                        let angle = t as f64 / freq;
                        let pos = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                        table.at(&[i, id]) * (d as f64).sqrt() + pos
                    })
                    .collect();
                if !self.roles {
                    return e;
                }
                let r = self.affine_rows("input_role.w", Some("input_role.b"), &e, 0..d);
                e.iter().zip(&r).map(|(a, b)| a * b).collect()
            })
            .collect()
    }

    /// Multi-head attention with optional role binding; key `j` is visible
    /// from query `i` when `j < kv_len` and, if `causal`, `j ≤ i`.
    pub fn attention(
        &self,
        prefix: &str,
        xq: &Rows,
        xkv: &Rows,
        kv_len: usize,
        causal: bool,
    ) -> Rows {
        let cfg = &self.model.config;
        let (d, dk) = (cfg.d_model, cfg.d_head());
        let w_o = self.p(&format!("{prefix}.w_o"));
        let b_o = self.p(&format!("{prefix}.b_o"));
        let name = |m: &str| format!("{prefix}.{m}");
        xq.iter()
            .enumerate()
            .map(|(i, zq)| {
                let mut out = vec![0.0; d];
                for h in 0..cfg.heads {
                    let rows = h * dk..(h + 1) * dk;
                    let q = self.affine_rows(&name("w_q"), Some(&name("b_q")), zq, rows.clone());
                    let visible: Vec<usize> = (0..xkv.len())
                        .filter(|&j| j < kv_len && (!causal || j <= i))
                        .collect();
                    let logits: Vec<f64> = visible
                        .iter()
                        .map(|&j| {
                            let k = self.affine_rows(&name("w_k"), None, &xkv[j], rows.clone());
                            dot(&q, &k) / (dk as f64).sqrt()
                        })
                        .collect();
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                    let total: f64 = exps.iter().sum();
                    let mut filler = vec![0.0; dk];
                    for (&j, e) in visible.iter().zip(&exps) {
                        let v = self.affine_rows(
                            &name("w_v"),
                            Some(&name("b_v")),
                            &xkv[j],
                            rows.clone(),
                        );
                        for (f, vv) in filler.iter_mut().zip(&v) {
                            *f += e / total * vv;
                        }
                    }
                    if self.roles {
                        let r =
                            self.affine_rows(&name("w_r"), Some(&name("b_r")), zq, rows.clone());
                        for (f, rr) in filler.iter_mut().zip(&r) {
                            *f *= rr;
                        }
                    }
                    for (o, out_o) in out.iter_mut().enumerate() {
                        let w_row = &w_o.row(o)[h * dk..(h + 1) * dk];
                        *out_o += dot(w_row, &filler) + b_o.at(&[h, o]);
                    }
                }
                out
            })
            .collect()
    }

    fn feed_forward(&self, prefix: &str, x: &[f64]) -> Vec<f64> {
        let cfg = &self.model.config;
        let hidden: Vec<f64> = self
            .affine_rows(
                &format!("{prefix}.w_f"),
                Some(&format!("{prefix}.b_f")),
                x,
                0..cfg.d_ff,
            )
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        self.affine_rows(
            &format!("{prefix}.w_g"),
            Some(&format!("{prefix}.b_g")),
            &hidden,
            0..cfg.d_model,
        )
    }

    fn add(a: &Rows, b: &Rows) -> Rows {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
            .collect()
    }

    fn ff_block(&self, pre: &str, h: Rows) -> Rows {
        let ff: Rows = h
            .iter()
            .map(|x| {
                self.feed_forward(
                    &format!("{pre}.ff"),
                    &self.layer_norm(&format!("{pre}.ln_ff"), x),
                )
            })
            .collect();
        Self::add(&h, &ff)
            .iter()
            .map(|x| self.layer_norm(&format!("{pre}.ln_out"), x))
            .collect()
    }

    /// Final encoder states for a padded source row with `len` real tokens.
    pub fn encode(&self, src: &[usize], len: usize) -> Rows {
        let mut z = self.embed(src);
        for l in 0..self.model.config.layers {
            let pre = format!("enc.{l}");
            let normed: Rows = z
                .iter()
                .map(|x| self.layer_norm(&format!("{pre}.ln_attn"), x))
                .collect();
            let attn = self.attention(&format!("{pre}.self"), &normed, &normed, len, false);
            let h = Self::add(&z, &attn);
            z = self.ff_block(&pre, h);
        }
        z
    }

    /// Final decoder states for a padded target-input row.
    pub fn decode(&self, tgt: &[usize], tgt_len: usize, enc: &Rows, src_len: usize) -> Rows {
        let mut z = self.embed(tgt);
        for l in 0..self.model.config.layers {
            let pre = format!("dec.{l}");
            let normed: Rows = z
                .iter()
                .map(|x| self.layer_norm(&format!("{pre}.ln_self"), x))
                .collect();
            let attn = self.attention(&format!("{pre}.self"), &normed, &normed, tgt_len, true);
            let h1 = Self::add(&z, &attn);
            let normed: Rows = h1
                .iter()
                .map(|x| self.layer_norm(&format!("{pre}.ln_cross"), x))
                .collect();
            let cross = self.attention(&format!("{pre}.cross"), &normed, enc, src_len, false);
            let h2 = Self::add(&h1, &cross);
            z = self.ff_block(&pre, h2);
        }
        z
    }

    pub fn logits(&self, z: &Rows) -> Rows {
        let table = self.p("embedding");
        let v = self.model.config.vocab_size;
        z.iter()
            .map(|x| {
                (0..v)
                    .map(|j| {
                        x.iter()
                            .enumerate()
                            .map(|(i, xi)| xi * table.at(&[i, j]))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Largest absolute difference between batch row `b` of a flattened
/// `[batch·len, d]` tensor and reference rows.
pub fn max_row_diff(t: &Tensor, b: usize, rows: &Rows) -> f64 {
    let len = rows.len();
    rows.iter()
        .enumerate()
        .flat_map(|(i, r)| t.row(b * len + i).iter().zip(r).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Two right-padded rows of random ids in `3..vocab` with the given lengths.
pub fn random_batch(
    rng: &mut impl rand::Rng,
    vocab: usize,
    len: usize,
    lengths: &[usize],
) -> TokenBatch {
    let mut ids = Vec::with_capacity(lengths.len() * len);
    for &l in lengths {
        for t in 0..len {
            ids.push(if t < l { rng.gen_range(3..vocab) } else { 0 });
        }
    }
    TokenBatch::new(ids, lengths.len(), len, lengths.to_vec()).unwrap()
}
