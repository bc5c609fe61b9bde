use super::ModelConfig;
use crate::error::{Error, Result};
use crate::grid::ObjectInstance;
use crate::rng::Rng;
use crate::tensor::layers::Linear;
use crate::tensor::{Graph, ParamSet, Tensor, Var};

/// Fully connected baseline over a flat object list and the four pooled
/// instruction vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcHead {
    pub layers: Vec<Linear>,
}

impl FcHead {
    pub fn register(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let inputs = cfg.max_objects * cfg.slot_width() + 4 * cfg.embed_dim;
        let layers = vec![
            Linear::register(params, "fc0", inputs, cfg.fc_width, rng),
            Linear::register(params, "fc1", cfg.fc_width, cfg.fc_width, rng),
            Linear::register(params, "fc2", cfg.fc_width, 4, rng),
        ];
        FcHead { layers }
    }

    /// Slot k = [presence, one-hot type, x, y, size] for object k in scene
    /// order; unused slots are zero.
    pub fn scene_slots(cfg: &ModelConfig, objects: &[ObjectInstance]) -> Result<Tensor> {
        if objects.len() > cfg.max_objects {
            return Err(Error::Range(format!(
                "{} objects exceed the {} list slots",
                objects.len(),
                cfg.max_objects
            )));
        }
        let sw = cfg.slot_width();
        let mut data = vec![0.0; cfg.max_objects * sw];
        for (k, o) in objects.iter().enumerate() {
            if o.type_id >= cfg.n_types {
                return Err(Error::Range(format!("object type {} outside catalog", o.type_id)));
            }
            let slot = &mut data[k * sw..(k + 1) * sw];
            slot[0] = 1.0;
            slot[1 + o.type_id] = 1.0;
            slot[1 + cfg.n_types] = o.position.x;
            slot[2 + cfg.n_types] = o.position.y;
            slot[3 + cfg.n_types] = o.size;
        }
        Tensor::new(vec![1, cfg.max_objects * sw], data)
    }

    /// Returns (first-layer pre-activation, 2×2 world coordinates).
    pub fn apply(&self, g: &mut Graph, vars: &[Var], slots: Tensor, pooled: Var) -> Result<(Var, Var)> {
        let slots = g.input(slots);
        let d4 = g.value(pooled).len();
        let lang = g.reshape(pooled, &[1, d4])?;
        let x = g.concat(&[slots, lang], 1)?;
        let pre0 = self.layers[0].apply(g, vars, x)?;
        let mut h = g.elu(pre0)?;
        h = self.layers[1].apply(g, vars, h)?;
        h = g.elu(h)?;
        let out = self.layers[2].apply(g, vars, h)?;
        Ok((pre0, g.reshape(out, &[2, 2])?))
    }
}
