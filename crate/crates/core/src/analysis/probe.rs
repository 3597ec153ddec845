use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{params, TokenBatch, TpTransformer};
use crate::tensor::{Graph, Tensor};

pub const RIDGE: f64 = 1e-6;

/// Reference mean errors of the full-scale trained TP-Transformer and
/// baseline Transformer, for context only.
pub const REFERENCE_MSE_TP: f64 = 0.017;
pub const REFERENCE_MSE_BASELINE: f64 = 0.009;

/// Affine map `ẑ = W v + b` fitted by ridge least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    /// `[target_dim × feature_dim]`.
    pub w: Tensor,
    pub b: Vec<f64>,
    /// Mean squared error over every target entry.
    pub mse: f64,
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

/// Fits `targets ≈ features · Wᵀ + b` on centred data with a ridge penalty
/// on `W` only, so a constant feature leaves `b` at the target mean.
pub fn fit_affine(features: &Tensor, targets: &Tensor, ridge: f64) -> Result<AffineFit> {
    if features.ndim() != 2 || targets.ndim() != 2 || features.rows() != targets.rows() {
        return Err(Error::dim(
            "affine probe",
            features.shape(),
            targets.shape(),
        ));
    }
    let (x, y) = (to_matrix(features), to_matrix(targets));
    let n = x.nrows() as f64;
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - x_mean[j]);
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - y_mean[j]);
    let gram = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * ridge;
    let chol = gram.cholesky().ok_or_else(|| Error::Numerical {
        param: "probe".into(),
        detail: "normal equations are not positive definite".into(),
    })?;
    // coef: [feature_dim × target_dim]
    let coef = chol.solve(&(xc.transpose() * &yc));
    let b = &y_mean - &(&x_mean * &coef);
    let pred = &x * &coef;
    let mut sse = 0.0;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let r = pred[(i, j)] + b[j] - y[(i, j)];
            sse += r * r;
        }
    }
    Ok(AffineFit {
        // coef = Wᵀ stored column-major, which is W row-major
        w: Tensor::new(vec![coef.ncols(), coef.nrows()], coef.as_slice().to_vec())?,
        b: b.iter().copied().collect(),
        mse: sse / (n * y.ncols() as f64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    /// Mean squared reconstruction error per head.
    pub per_head: Vec<f64>,
    pub mean: f64,
    /// Number of encoder positions used.
    pub positions: usize,
}

/// Final encoder states `[positions × d_model]` over the unpadded positions
/// of `samples`, as emitted by the encoder (after its last layer norm).
pub fn final_encoder_states(
    model: &TpTransformer,
    vocab: &Vocabulary,
    samples: &[Sample],
) -> Result<Tensor> {
    let d = model.config.d_model;
    let mut rows = Vec::new();
    for chunk in samples.chunks(64) {
        let srcs = chunk
            .iter()
            .map(|s| vocab.encode(&s.question))
            .collect::<Result<Vec<_>>>()?;
        let len = srcs.iter().map(Vec::len).max().unwrap_or(1);
        let mut ids = Vec::with_capacity(srcs.len() * len);
        for s in &srcs {
            ids.extend_from_slice(s);
            ids.resize(ids.len() + len - s.len(), crate::data::PAD);
        }
        let batch = TokenBatch::new(ids, srcs.len(), len, srcs.iter().map(Vec::len).collect())?;
        let mut g = Graph::new();
        let p = model.bind(&mut g, false);
        let enc = model.encode(&mut g, &p, &batch, None)?;
        let z = g.value(enc);
        for (b, s) in srcs.iter().enumerate() {
            for t in 0..s.len() {
                rows.extend_from_slice(z.row(b * len + t));
            }
        }
    }
    let n = rows.len() / d;
    Tensor::new(vec![n, d], rows)
}

/// Value vectors `v_h(z) = W_v^h z + b_v^h` of one head of the final
/// encoder layer, one row per state.
pub fn head_values(model: &TpTransformer, states: &Tensor, head: usize) -> Result<Tensor> {
    let cfg = &model.config;
    let dk = cfg.d_head();
    let prefix = params::attn_prefix("enc", cfg.layers - 1, "self");
    let get = |name: &str| {
        model
            .params
            .get(&format!("{prefix}.{name}"))
            .ok_or_else(|| Error::Config(format!("missing `{prefix}.{name}`")))
    };
    let (w, b) = (get("w_v")?, get("b_v")?);
    let rows: Vec<f64> = w.data()[head * dk * cfg.d_model..(head + 1) * dk * cfg.d_model].to_vec();
    let w_h = Tensor::new(vec![dk, cfg.d_model], rows)?;
    let mut v = states.matmul(&w_h.t())?;
    let b_h = &b.data()[head * dk..(head + 1) * dk];
    for row in v.data_mut().chunks_mut(dk) {
        row.iter_mut().zip(b_h).for_each(|(x, bias)| *x += bias);
    }
    Ok(v)
}

/// Reconstructs final encoder states from each head's value vectors over the
/// first `n` samples and reports the error per head.
pub fn reconstruction_probe(
    model: &TpTransformer,
    vocab: &Vocabulary,
    samples: &[Sample],
    n: usize,
) -> Result<ProbeResult> {
    if n == 0 || samples.is_empty() {
        return Err(Error::Config("probe needs at least one sample".into()));
    }
    let states = final_encoder_states(model, vocab, &samples[..n.min(samples.len())])?;
    let per_head = (0..model.config.heads)
        .map(|h| fit_affine(&head_values(model, &states, h)?, &states, RIDGE).map(|f| f.mse))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_head.iter().sum::<f64>() / per_head.len() as f64;
    Ok(ProbeResult {
        per_head,
        mean,
        positions: states.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, d: usize) -> Tensor {
        let data = (0..n * d)
            .map(|i| ((i * 7919 % 113) as f64 / 17.0).sin())
            .collect();
        Tensor::new(vec![n, d], data).unwrap()
    }

    #[test]
    fn identity_features_reconstruct_exactly() {
        let z = grid(40, 5);
        let fit = fit_affine(&z, &z, RIDGE).unwrap();
        assert!(fit.mse < 1e-9, "{}", fit.mse);
    }

    #[test]
    fn zero_features_leave_the_variance() {
        let z = grid(40, 3);
        let fit = fit_affine(&Tensor::zeros(&[40, 2]), &z, RIDGE).unwrap();
        let mut var = 0.0;
        for j in 0..3 {
            let col: Vec<f64> = (0..40).map(|i| z.at(&[i, j])).collect();
            let mean = col.iter().sum::<f64>() / 40.0;
            assert!((fit.b[j] - mean).abs() < 1e-12);
            var += col.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        }
        assert!((fit.mse - var / 120.0).abs() < 1e-12);
    }
}
