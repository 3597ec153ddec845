use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Which attention sublayer a trace came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    EncoderSelf,
    DecoderSelf,
    DecoderCross,
}

impl Site {
    pub fn as_str(self) -> &'static str {
        match self {
            Site::EncoderSelf => "encoder_self",
            Site::DecoderSelf => "decoder_self",
            Site::DecoderCross => "decoder_cross",
        }
    }
}

/// One head's attention for one sequence, cropped to the unpadded query and
/// key lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadTrace {
    pub batch_index: usize,
    pub layer: usize,
    pub head: usize,
    pub site: Site,
    /// `[q_len × k_len]` attention weights.
    pub alpha: Tensor,
    /// Row-major keep mask aligned with `alpha`.
    pub keep: Vec<bool>,
    /// `[q_len × d_head]` role vectors (all ones without role binding).
    pub roles: Tensor,
    /// `[q_len × d_head]` attended fillers `v̄`.
    pub fillers: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub heads: Vec<HeadTrace>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationReport {
    pub rows: usize,
    pub max_row_error: f64,
    pub masked_nonzero: usize,
}

impl NormalizationReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_row_error <= tol && self.masked_nonzero == 0
    }
}

impl AttentionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn select(
        &self,
        site: Site,
        layer: usize,
        head: usize,
    ) -> impl Iterator<Item = &HeadTrace> {
        self.heads
            .iter()
            .filter(move |t| t.site == site && t.layer == layer && t.head == head)
    }

    /// Row-sum deviation from one and the count of masked entries that are
    /// not exactly zero, over every captured matrix.
    pub fn normalization(&self) -> NormalizationReport {
        let mut report = NormalizationReport {
            rows: 0,
            max_row_error: 0.0,
            masked_nonzero: 0,
        };
        for t in &self.heads {
            let cols = t.alpha.cols();
            for r in 0..t.alpha.rows() {
                let row = t.alpha.row(r);
                let keep = &t.keep[r * cols..(r + 1) * cols];
                let sum: f64 = row.iter().sum();
                report.rows += 1;
                report.max_row_error = report.max_row_error.max((sum - 1.0).abs());
                report.masked_nonzero += row
                    .iter()
                    .zip(keep)
                    .filter(|(&a, &k)| !k && a != 0.0)
                    .count();
            }
        }
        report
    }
}
