//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `TPTCKPT1`, a little-endian `u64` header length,
//! a JSON header (config, vocabulary, step, array directory, run settings),
//! then every array as little-endian `f64` in directory order. Adam moments
//! are stored as `adam.m.<name>` and `adam.v.<name>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerState;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, TpTransformer};
use crate::tensor::{NamedTensors, Tensor};

pub const MAGIC: &[u8; 8] = b"TPTCKPT1";
pub const FORMAT_VERSION: u32 = 1;

const MOMENT_M: &str = "adam.m.";
const MOMENT_V: &str = "adam.v.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TpTransformer,
    pub vocab: Vocabulary,
    pub optimizer: OptimizerState,
    /// Resolved settings of the run that produced the file; `Null` if none.
    pub run: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab: Vocabulary,
    step: u64,
    arrays: Vec<ArrayEntry>,
    run: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the array section.
    offset: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.params.named();
        let mut arrays: Vec<(String, &Tensor)> = Vec::new();
        for (name, t) in params {
            arrays.push((name.clone(), t));
        }
        for (prefix, moments) in [(MOMENT_M, &self.optimizer.m), (MOMENT_V, &self.optimizer.v)] {
            for (name, t) in moments {
                arrays.push((format!("{prefix}{name}"), t));
            }
        }
        let mut offset = 0u64;
        let entries = arrays
            .iter()
            .map(|(name, t)| {
                let e = ArrayEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.numel() as u64;
                e
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.model.config.clone(),
            vocab: self.vocab.clone(),
            step: self.optimizer.step,
            arrays: entries,
            run: self.run.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &arrays {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Err(Error::Format(msg.to_string()));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return fail("missing magic tag");
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let Some(data_start) = usize::try_from(hlen).ok().and_then(|h| h.checked_add(16)) else {
            return fail("header length overflows");
        };
        if data_start > bytes.len() {
            return fail("truncated header");
        }
        let header: Header = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let data = &bytes[data_start..];
        let mut expected_offset = 0u64;
        let (mut params, mut m, mut v) = (
            NamedTensors::new(),
            NamedTensors::new(),
            NamedTensors::new(),
        );
        for e in header.arrays {
            if e.offset != expected_offset {
                return fail("array directory is not contiguous");
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > data.len() {
                return Err(Error::Format(format!("truncated array `{}`", e.name)));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(e.shape, values)
                .map_err(|err| Error::Format(format!("array `{}`: {err}", e.name)))?;
            expected_offset = end as u64;
            if let Some(name) = e.name.strip_prefix(MOMENT_M) {
                m.insert(name.to_string(), t);
            } else if let Some(name) = e.name.strip_prefix(MOMENT_V) {
                v.insert(name.to_string(), t);
            } else {
                params.insert(e.name, t);
            }
        }
        if expected_offset as usize != data.len() {
            return fail("trailing bytes after the last array");
        }
        let same_keys =
            |a: &NamedTensors| a.len() == params.len() && a.keys().all(|k| params.contains_key(k));
        if !same_keys(&m) || !same_keys(&v) {
            return fail("optimizer moments do not match the parameters");
        }
        if header.config.vocab_size != header.vocab.len() {
            return fail("vocabulary size disagrees with the model config");
        }
        let model = TpTransformer::from_parts(header.config, ModelParams::from_named(params))?;
        Ok(Self {
            model,
            vocab: header.vocab,
            optimizer: OptimizerState {
                step: header.step,
                m,
                v,
            },
            run: header.run,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
