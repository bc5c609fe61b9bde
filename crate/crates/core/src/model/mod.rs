//! Lang-UNet and the Lang-FCNet baseline: instruction encoder, grounding
//! head, loss, and checkpoint I/O.

mod config;
mod encoder;
mod fcnet;
mod unet;

pub use config::{ModelConfig, ModelKind};
pub use encoder::{Encoder, EncoderVars};
pub use fcnet::FcHead;
pub use unet::{ConvParams, GroundingVars, Hourglass, SPATIAL_CHANNELS};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{encode_grid, GridEncoding, ObjectInstance, Scene, WorldPoint};
use crate::rng::rng_from_seed;
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint, Graph, ParamSet, Tensor, Var};
use crate::text::{tokenize, Vocabulary};

pub const MANIFEST_FORMAT: &str = "langgrid-model";

/// Everything a forward pass reads about one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub ids: Vec<usize>,
    pub grid: GridEncoding,
    pub objects: Vec<ObjectInstance>,
}

impl ModelInput {
    pub fn new(ids: Vec<usize>, scene: &Scene, cfg: &ModelConfig) -> Result<Self> {
        if scene.catalog_size != cfg.n_types {
            return Err(Error::Config(format!(
                "scene catalog has {} types, model expects {}",
                scene.catalog_size, cfg.n_types
            )));
        }
        Ok(ModelInput {
            ids,
            grid: encode_grid(scene, cfg.grid_w, cfg.grid_h)?,
            objects: scene.objects.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Head {
    Unet(Hourglass),
    Fc(FcHead),
}

/// Parameter layout of a model: which entries of a [`ParamSet`] feed which
/// layer. Forward passes take the bound parameter leaves explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub kind: ModelKind,
    pub encoder: Encoder,
    pub head: Head,
}

#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub encoder: EncoderVars,
    pub grounding: Option<GroundingVars>,
    /// First hidden pre-activation of the FC baseline.
    pub fc_hidden: Option<Var>,
    /// 2×2 world coordinates: row 0 start (x, y), row 1 end (x, y).
    pub world: Var,
}

impl Architecture {
    pub fn build(config: ModelConfig, kind: ModelKind, seed: u64) -> Result<(Self, ParamSet)> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::new();
        let encoder = Encoder::register(&mut params, &config, kind == ModelKind::Langunet, &mut rng);
        let head = match kind {
            ModelKind::Langunet => Head::Unet(Hourglass::register(&mut params, &config, &mut rng)),
            ModelKind::Langfcnet => Head::Fc(FcHead::register(&mut params, &config, &mut rng)),
        };
        Ok((
            Architecture {
                config,
                kind,
                encoder,
                head,
            },
            params,
        ))
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], input: &ModelInput) -> Result<ForwardVars> {
        let cfg = &self.config;
        let enc = self.encoder.apply(g, vars, &input.ids)?;
        match &self.head {
            Head::Unet(hg) => {
                if (input.grid.width, input.grid.height) != (cfg.grid_w, cfg.grid_h) {
                    return Err(Error::Config(format!(
                        "grid {}×{} does not match model grid {}×{}",
                        input.grid.width, input.grid.height, cfg.grid_w, cfg.grid_h
                    )));
                }
                let (s1, s2) = enc
                    .selectors
                    .ok_or_else(|| Error::Config("grid model built without selectors".into()))?;
                let gv = hg.apply(g, vars, &input.grid, s1, s2, enc.context)?;
                let world = pixel_to_world_var(g, gv.pixel, cfg.grid_w, cfg.grid_h)?;
                Ok(ForwardVars {
                    encoder: enc,
                    grounding: Some(gv),
                    fc_hidden: None,
                    world,
                })
            }
            Head::Fc(fc) => {
                let slots = FcHead::scene_slots(cfg, &input.objects)?;
                let (hidden, world) = fc.apply(g, vars, slots, enc.pooled)?;
                Ok(ForwardVars {
                    encoder: enc,
                    grounding: None,
                    fc_hidden: Some(hidden),
                    world,
                })
            }
        }
    }
}

/// Affine map from 1-based expected cell indices to world units.
fn pixel_to_world_var(g: &mut Graph, pixel: Var, w: usize, h: usize) -> Result<Var> {
    let (sw, sh) = (2.0 / w as f64, 2.0 / h as f64);
    let scale = g.input(Tensor::new(vec![2, 2], vec![sw, sh, sw, sh])?);
    let (ow, oh) = (-1.0 / w as f64 - 1.0, -1.0 / h as f64 - 1.0);
    let offset = g.input(Tensor::new(vec![2, 2], vec![ow, oh, ow, oh])?);
    let scaled = g.mul(pixel, scale)?;
    g.add(scaled, offset)
}

/// Mean absolute error over the supervised coordinates: the start always,
/// the end only when a gold end exists.
pub fn mae_loss(g: &mut Graph, world: Var, gold_start: WorldPoint, gold_end: Option<WorldPoint>) -> Result<Var> {
    let end = gold_end.unwrap_or(WorldPoint::ORIGIN);
    let gold = g.input(Tensor::new(vec![2, 2], vec![gold_start.x, gold_start.y, end.x, end.y])?);
    let m = if gold_end.is_some() { 1.0 } else { 0.0 };
    let mask = g.input(Tensor::new(vec![2, 2], vec![1.0, 1.0, m, m])?);
    let diff = g.sub(world, gold)?;
    let abs = g.abs(diff)?;
    let masked = g.mul(abs, mask)?;
    let total = g.sum(masked)?;
    g.scale(total, 1.0 / (2.0 + 2.0 * m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: WorldPoint,
    pub end: WorldPoint,
    /// 2×W×H normalized heatmaps, `[k][i][j]`; absent for the FC baseline.
    pub heatmaps: Option<Vec<f64>>,
    /// 4×N_T attention weights.
    pub attention: Vec<f64>,
    pub n_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    kind: ModelKind,
    config: ModelConfig,
    vocab: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<serde_json::Value>,
}

/// A model with its parameters and vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: ParamSet,
    vocab: Vocabulary,
    run: Option<serde_json::Value>,
}

impl Model {
    /// Fresh model; `config.vocab_size` is taken from `vocab`.
    pub fn new(mut config: ModelConfig, kind: ModelKind, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        let (arch, params) = Architecture::build(config, kind, seed)?;
        Ok(Model {
            arch,
            params,
            vocab,
            run: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Free-form run description stored in the checkpoint manifest.
    pub fn run_info(&self) -> Option<&serde_json::Value> {
        self.run.as_ref()
    }

    pub fn set_run_info(&mut self, run: serde_json::Value) {
        self.run = Some(run);
    }

    pub fn input(&self, instruction: &str, scene: &Scene) -> Result<ModelInput> {
        let tokens = tokenize(instruction);
        ModelInput::new(self.vocab.ids(&tokens), scene, self.config())
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Prediction> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.values().iter().map(|t| g.input(t.clone())).collect();
        let fw = self.arch.forward(&mut g, &vars, input)?;
        let w = g.value(fw.world).data();
        Ok(Prediction {
            start: WorldPoint::new(w[0], w[1]),
            end: WorldPoint::new(w[2], w[3]),
            heatmaps: fw.grounding.map(|gv| g.value(gv.heatmaps).data().to_vec()),
            attention: g.value(fw.encoder.attention).data().to_vec(),
            n_tokens: input.ids.len(),
        })
    }

    /// Forward and backward for one sample; parameter gradients accumulate.
    /// Returns the loss value.
    pub fn accumulate_loss(&mut self, input: &ModelInput, gold_start: WorldPoint, gold_end: Option<WorldPoint>) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g);
        let fw = self.arch.forward(&mut g, &vars, input)?;
        let loss = mae_loss(&mut g, fw.world, gold_start, gold_end)?;
        g.backward(loss)?;
        self.params.accumulate(&g, &vars);
        Ok(g.value(loss).item())
    }

    pub fn manifest(&self) -> String {
        serde_json::to_string(&Manifest {
            format: MANIFEST_FORMAT.into(),
            kind: self.arch.kind,
            config: self.arch.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            run: self.run.clone(),
        })
        .expect("manifest serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        Checkpoint {
            params: self.params.clone(),
            manifest: self.manifest(),
        }
        .to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.params, &self.manifest())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }

    fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&ckpt.manifest)
            .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected manifest format {:?}", m.format)));
        }
        let vocab = Vocabulary::from_tokens(m.vocab)?;
        if vocab.len() != m.config.vocab_size {
            return Err(Error::Checkpoint("vocabulary size disagrees with config".into()));
        }
        let (arch, fresh) = Architecture::build(m.config, m.kind, 0)?;
        if fresh.len() != ckpt.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, architecture needs {}",
                ckpt.params.len(),
                fresh.len()
            )));
        }
        for i in 0..fresh.len() {
            if fresh.name(i) != ckpt.params.name(i) || fresh.value(i).shape() != ckpt.params.value(i).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected {} {:?}, found {} {:?}",
                    fresh.name(i),
                    fresh.value(i).shape(),
                    ckpt.params.name(i),
                    ckpt.params.value(i).shape()
                )));
            }
        }
        Ok(Model {
            arch,
            params: ckpt.params,
            vocab,
            run: m.run,
        })
    }
}
