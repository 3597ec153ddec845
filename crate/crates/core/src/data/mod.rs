//! Toy math problems, the character vocabulary, batching and dataset files.

mod batch;
mod generate;
pub mod oracle;
mod vocab;

pub use batch::{collate, encode_samples, make_batches, Batch, EncodedSample};
pub use generate::{generate_dataset, generate_excluding, Module};
pub use vocab::{Vocabulary, EOS, PAD, SOS};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub question: String,
    pub answer: String,
    pub module: String,
}

/// Reads one sample per line.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if sample.answer.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                detail: "empty answer".into(),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).expect("plain strings serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
