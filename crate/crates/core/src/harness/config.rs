use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WorldPoint;
use crate::model::{ModelConfig, ModelKind};
use crate::synth::{DataConfig, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Langunet,
    Langfcnet,
    Center,
    Random,
}

impl ModelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::Langunet => "langunet",
            ModelChoice::Langfcnet => "langfcnet",
            ModelChoice::Center => "center",
            ModelChoice::Random => "random",
        }
    }

    pub fn trainable(self) -> Option<ModelKind> {
        match self {
            ModelChoice::Langunet => Some(ModelKind::Langunet),
            ModelChoice::Langfcnet => Some(ModelKind::Langfcnet),
            ModelChoice::Center | ModelChoice::Random => None,
        }
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "langunet" => Ok(ModelChoice::Langunet),
            "langfcnet" => Ok(ModelChoice::Langfcnet),
            "center" => Ok(ModelChoice::Center),
            "random" => Ok(ModelChoice::Random),
            _ => Err(Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// Every knob of a run. Serialized into each artifact the harness writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub width: usize,
    pub depth: usize,
    pub skips: bool,
    pub model: ModelChoice,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub tol: f64,
    pub seed: u64,
    pub patience: usize,
    pub min_count: usize,
    /// Train on a fresh label-preserving variant of each record every epoch.
    pub augment: bool,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Most objects per generated scene, and the FCNet slot count.
    pub max_objects: usize,
    pub region: Region,
    pub test_shift: WorldPoint,
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DataConfig::default();
        let m = ModelConfig::default();
        RunConfig {
            grid: m.grid_w,
            embed_dim: m.embed_dim,
            hidden: m.hidden,
            width: m.width,
            depth: m.depth,
            skips: m.skips,
            model: ModelChoice::Langunet,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-9,
            tol: 0.05,
            seed: d.seed,
            patience: 5,
            min_count: 1,
            augment: true,
            train: d.train,
            dev: d.dev,
            test: d.test,
            max_objects: d.max_objects,
            region: d.region,
            test_shift: d.test_shift,
            data: PathBuf::from("data"),
            out: PathBuf::from("runs"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse_num::<f64>(key, p.trim()))
        .collect::<Result<_>>()?;
    if parts.len() != n {
        return Err(Error::Config(format!("{key}: expected {n} comma-separated numbers")));
    }
    Ok(parts)
}

impl RunConfig {
    /// Sets one field from its text form. Keys match the field names, with
    /// `region = x_min,x_max,y_min,y_max` and `test_shift = dx,dy`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "grid" => self.grid = parse_num(key, v)?,
            "embed_dim" => self.embed_dim = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "width" => self.width = parse_num(key, v)?,
            "depth" => self.depth = parse_num(key, v)?,
            "skips" => self.skips = parse_num(key, v)?,
            "model" => self.model = v.parse()?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "learning_rate" | "lr" => self.learning_rate = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "min_count" => self.min_count = parse_num(key, v)?,
            "augment" => self.augment = parse_num(key, v)?,
            "train" => self.train = parse_num(key, v)?,
            "dev" => self.dev = parse_num(key, v)?,
            "test" => self.test = parse_num(key, v)?,
            "max_objects" => self.max_objects = parse_num(key, v)?,
            "region" => {
                let p = parse_list(key, v, 4)?;
                self.region = Region {
                    x_min: p[0],
                    x_max: p[1],
                    y_min: p[2],
                    y_max: p[3],
                };
            }
            "test_shift" => {
                let p = parse_list(key, v, 2)?;
                self.test_shift = WorldPoint::new(p[0], p[1]);
            }
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: k + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate and weight decay must be non-negative".into()));
        }
        self.data_config().validate()?;
        if self.model.trainable().is_some() {
            self.model_config(2).validate()?;
        }
        Ok(())
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            seed: self.seed,
            grid: self.grid,
            train: self.train,
            dev: self.dev,
            test: self.test,
            max_objects: self.max_objects,
            region: self.region,
            test_shift: self.test_shift,
            ..DataConfig::default()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            grid_w: self.grid,
            grid_h: self.grid,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            width: self.width,
            depth: self.depth,
            skips: self.skips,
            max_objects: self.max_objects,
            vocab_size,
            ..ModelConfig::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}
