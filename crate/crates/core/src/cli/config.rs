//! Run settings read from a TOML file and overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tp_transformer::model::ModelConfig;
use tp_transformer::training::TrainConfig;

use super::Failure;

/// Model dimensions; the vocabulary size comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub role_binding: bool,
    pub ln_eps: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings::from(&ModelConfig::desk(1))
    }
}

impl From<&ModelConfig> for ModelSettings {
    fn from(c: &ModelConfig) -> Self {
        Self {
            d_model: c.d_model,
            d_ff: c.d_ff,
            heads: c.heads,
            layers: c.layers,
            max_src_len: c.max_src_len,
            max_tgt_len: c.max_tgt_len,
            role_binding: c.role_binding,
            ln_eps: c.ln_eps,
        }
    }
}

impl ModelSettings {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            d_ff: self.d_ff,
            heads: self.heads,
            vocab_size,
            layers: self.layers,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            role_binding: self.role_binding,
            ln_eps: self.ln_eps,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

/// Everything a training run depends on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.model.role_binding = false;
        c.train.learning_rate = 3e-4;
        c.paths.data = Some("train.jsonl".into());
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("[train]\nmax_steps = 7\n").unwrap();
        assert_eq!(c.train.max_steps, 7);
        assert_eq!(c.model, ModelSettings::default());
    }
}
