use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parameters the optimizer may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningMode {
    /// Encoder biases plus the whole head.
    #[default]
    Bitfit,
    /// Everything.
    Finetune,
    /// Head only.
    Freeze,
}

impl TuningMode {
    pub const ALL: [TuningMode; 3] = [TuningMode::Bitfit, TuningMode::Finetune, TuningMode::Freeze];
}

impl fmt::Display for TuningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TuningMode::Bitfit => "bitfit",
            TuningMode::Finetune => "finetune",
            TuningMode::Freeze => "freeze",
        })
    }
}

impl FromStr for TuningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitfit" => Ok(TuningMode::Bitfit),
            "finetune" => Ok(TuningMode::Finetune),
            "freeze" => Ok(TuningMode::Freeze),
            other => Err(Error::Config(format!("unknown tuning mode `{other}`"))),
        }
    }
}

/// Model and training hyperparameters. The JSON form uses the short field
/// names (`L`, `d_m`, `B`, `C`, `N`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Chunk length.
    #[serde(rename = "L")]
    pub chunk_len: usize,
    #[serde(rename = "d_m")]
    pub d_model: usize,
    /// Encoder blocks.
    #[serde(rename = "B")]
    pub blocks: usize,
    /// Label count; 0 means "take it from the training labels".
    #[serde(rename = "C")]
    pub labels: usize,
    /// Attention hops.
    #[serde(rename = "N")]
    pub hops: usize,
    pub share_hops: bool,
    pub tuning_mode: TuningMode,
    pub threshold: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            chunk_len: 64,
            d_model: 16,
            blocks: 1,
            labels: 0,
            hops: 2,
            share_hops: false,
            tuning_mode: TuningMode::Bitfit,
            threshold: 0.5,
            lr: 1e-3,
            epochs: 20,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.chunk_len < 1 {
            return fail("L must be at least 1");
        }
        if self.d_model < 1 {
            return fail("d_m must be at least 1");
        }
        if self.blocks < 1 {
            return fail("B must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie in (0, 1)");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail("lr must be finite and non-negative");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ModelConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
