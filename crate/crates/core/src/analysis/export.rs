use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, TraceSet};
use crate::error::{Error, Result};
use crate::model::Site;

/// One exported attention matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionMapRecord {
    pub sample: usize,
    pub layer: usize,
    pub head: usize,
    pub site: Site,
    /// Symbol at each query position (matrix row).
    pub query_symbols: Vec<String>,
    /// Symbol at each key position (matrix column).
    pub key_symbols: Vec<String>,
    /// Row-major `[queries × keys]` weights.
    pub alpha: Vec<Vec<f64>>,
    /// Role cluster of each query position, for clustered encoder maps.
    pub role_clusters: Option<Vec<usize>>,
}

/// Builds one record per traced `(sample, layer, head, site)`. `clusters`,
/// when given, must assign the records of `set` in order.
pub fn attention_maps(
    set: &TraceSet,
    clusters: Option<&ClusterAssignment>,
) -> Result<Vec<AttentionMapRecord>> {
    let mut by_position: HashMap<(usize, usize), usize> = HashMap::new();
    if let Some(c) = clusters {
        if c.assignments.len() != set.records.len() {
            return Err(Error::dim(
                "cluster assignment",
                &[set.records.len()],
                &[c.assignments.len()],
            ));
        }
        for (r, &a) in set.records.iter().zip(&c.assignments) {
            by_position.insert((r.sample, r.position), a);
        }
    }
    Ok(set
        .trace
        .heads
        .iter()
        .map(|t| {
            let (src, tgt) = (
                &set.src_symbols[t.batch_index],
                &set.tgt_symbols[t.batch_index],
            );
            let (q, k) = match t.site {
                Site::EncoderSelf => (src, src),
                Site::DecoderSelf => (tgt, tgt),
                Site::DecoderCross => (tgt, src),
            };
            let rows = t.alpha.rows();
            let role_clusters = (t.site == Site::EncoderSelf && clusters.is_some()).then(|| {
                (0..rows)
                    .map(|pos| by_position[&(t.batch_index, pos)])
                    .collect()
            });
            AttentionMapRecord {
                sample: t.batch_index,
                layer: t.layer,
                head: t.head,
                site: t.site,
                query_symbols: q[..rows].to_vec(),
                key_symbols: k[..t.alpha.cols()].to_vec(),
                alpha: (0..rows).map(|r| t.alpha.row(r).to_vec()).collect(),
                role_clusters,
            }
        })
        .collect())
}

/// Writes one record per line.
pub fn export_attention_maps(
    set: &TraceSet,
    clusters: Option<&ClusterAssignment>,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let path = path.as_ref();
    let records = attention_maps(set, clusters)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &records {
        let line = serde_json::to_string(r).expect("finite weights serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(records.len())
}

pub fn read_attention_maps(path: impl AsRef<Path>) -> Result<Vec<AttentionMapRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}
