use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Langunet,
    Langfcnet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Langunet => "langunet",
            ModelKind::Langfcnet => "langfcnet",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "langunet" => Ok(ModelKind::Langunet),
            "langfcnet" => Ok(ModelKind::Langfcnet),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Architecture hyperparameters. Everything that changes parameter shapes
/// lives here and is recorded in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub embed_dim: usize,
    /// BiLSTM hidden size per direction.
    pub hidden: usize,
    pub lstm_layers: usize,
    pub attention_kernel: usize,
    /// N_o, the number of object types.
    pub n_types: usize,
    pub vocab_size: usize,
    /// Hourglass channel width.
    pub width: usize,
    /// Number of stride-2 stages.
    pub depth: usize,
    pub kernel: usize,
    pub skips: bool,
    pub fc_width: usize,
    pub max_objects: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid_w: 32,
            grid_h: 32,
            embed_dim: 32,
            hidden: 64,
            lstm_layers: 2,
            attention_kernel: 3,
            n_types: 12,
            vocab_size: 2,
            width: 16,
            depth: 4,
            kernel: 5,
            skips: true,
            fc_width: 256,
            max_objects: 24,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let stride = 1usize << self.depth;
        if self.grid_w == 0 || self.grid_h == 0 || self.grid_w % stride != 0 || self.grid_h % stride != 0 {
            return Err(Error::Config(format!(
                "grid {}×{} must be a positive multiple of {stride} for {} stride-2 stages",
                self.grid_w, self.grid_h, self.depth
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("hourglass depth must be at least 1".into()));
        }
        if self.kernel % 2 == 0 || self.attention_kernel % 2 == 0 {
            return Err(Error::Config("kernel sizes must be odd".into()));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("lstm_layers", self.lstm_layers),
            ("n_types", self.n_types),
            ("width", self.width),
            ("fc_width", self.fc_width),
            ("max_objects", self.max_objects),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < crate::text::RESERVED {
            return Err(Error::Config("vocabulary must include the reserved ids".into()));
        }
        Ok(())
    }

    /// Width of one slot of the FCNet scene list.
    pub fn slot_width(&self) -> usize {
        1 + self.n_types + 3
    }
}
