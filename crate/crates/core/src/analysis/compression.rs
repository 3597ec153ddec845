//! The Hadamard product as the diagonal of a tensor product:
//! `diag(Mᵀ (v rᵀ) N) = (Mᵀ v) ⊙ (Nᵀ r)` for any square `M`, `N`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Left side computed through the full outer product.
pub fn diag_of_bound_product(
    m: &DMatrix<f64>,
    n: &DMatrix<f64>,
    v: &DVector<f64>,
    r: &DVector<f64>,
) -> DVector<f64> {
    let outer = v * r.transpose();
    (m.transpose() * outer * n).diagonal()
}

/// Right side computed from the two transformed vectors.
pub fn hadamard_of_maps(
    m: &DMatrix<f64>,
    n: &DMatrix<f64>,
    v: &DVector<f64>,
    r: &DVector<f64>,
) -> DVector<f64> {
    (m.transpose() * v).component_mul(&(n.transpose() * r))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompressionReport {
    pub d_model: usize,
    pub d_head: usize,
    pub trials: usize,
    /// Largest elementwise gap between the two sides, general `M`, `N`.
    pub max_deviation: f64,
    /// Same, with `M`, `N` orthonormal.
    pub max_deviation_orthonormal: f64,
    /// Largest `|MᵀM − I|` entry over the orthonormal draws.
    pub max_orthonormality_error: f64,
}

/// Checks the identity on `trials` random draws of `v`, `r` (length `d_head`)
/// and `d_head×d_head` maps, both Gaussian and orthonormalized by QR.
pub fn hadamard_compression_check(
    d_model: usize,
    d_head: usize,
    seed: u64,
    trials: usize,
) -> Result<CompressionReport> {
    if d_head == 0 || d_head > d_model || trials == 0 {
        return Err(Error::Config(format!(
            "need 0 < d_head ≤ d_model and trials > 0 (got d_head={d_head}, d_model={d_model}, trials={trials})"
        )));
    }
    let mut rng = rng::stream(seed, streams::ANALYSIS);
    let mut mat = |n: usize| {
        DMatrix::<f64>::from_iterator(n, n, (0..n * n).map(|_| StandardNormal.sample(&mut rng)))
    };
    let mut report = CompressionReport {
        d_model,
        d_head,
        trials,
        max_deviation: 0.0,
        max_deviation_orthonormal: 0.0,
        max_orthonormality_error: 0.0,
    };
    let identity = DMatrix::<f64>::identity(d_head, d_head);
    for _ in 0..trials {
        let (m, n) = (mat(d_head), mat(d_head));
        let vr = mat(d_head);
        let (v, r) = (
            vr.column(0).into_owned(),
            vr.column(1 % d_head).into_owned(),
        );
        let gap = |m: &DMatrix<f64>, n: &DMatrix<f64>| {
            (diag_of_bound_product(m, n, &v, &r) - hadamard_of_maps(m, n, &v, &r)).amax()
        };
        report.max_deviation = report.max_deviation.max(gap(&m, &n));
        let (qm, qn) = (m.clone().qr().q(), n.clone().qr().q());
        report.max_deviation_orthonormal = report.max_deviation_orthonormal.max(gap(&qm, &qn));
        for q in [&qm, &qn] {
            let err = (q.transpose() * q - &identity).amax();
            report.max_orthonormality_error = report.max_orthonormality_error.max(err);
        }
    }
    Ok(report)
}
