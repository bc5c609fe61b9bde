use super::ModelConfig;
use crate::error::Result;
use crate::grid::GridEncoding;
use crate::rng::Rng;
use crate::tensor::{Graph, Init, Padding, ParamSet, Tensor, Var};

/// Number of spatial input channels: U¹, U², S.
pub const SPATIAL_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub weight: usize,
    pub bias: usize,
}

/// Stride-2 hourglass over V = [U¹; U²; S; ê₃; ê₄] with a 1×1 output layer.
///
/// The tiled context channels are convolved without materializing them, so
/// the first down layer and the top skip each keep a separate kernel for
/// the context part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hourglass {
    pub down: Vec<ConvParams>,
    pub down0_context: usize,
    pub up: Vec<ConvParams>,
    pub out_weight: usize,
    pub out_bias: usize,
    pub out_spatial: Option<usize>,
    pub out_context: Option<usize>,
}

/// Every intermediate map of one grounding pass.
#[derive(Clone, Debug)]
pub struct GroundingVars {
    pub u1: Var,
    pub u2: Var,
    /// 3×W×H: U¹, U², S.
    pub spatial: Var,
    pub down: Vec<Var>,
    pub up: Vec<Var>,
    /// 2×W×H hourglass output before normalization.
    pub logits: Var,
    /// 2×W×H spatial softmax, channel 0 start, channel 1 end.
    pub heatmaps: Var,
    /// 2×2 expected 1-based (i, j) per heatmap.
    pub pixel: Var,
}

impl Hourglass {
    pub fn register(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let (f, k, ctx) = (cfg.width, cfg.kernel, 2 * cfg.embed_dim);
        let mut conv = |params: &mut ParamSet, name: String, shape: [usize; 4], fan: usize, bias_len: usize| {
            let weight = params.add(format!("{name}.weight"), &shape, Init::FanIn(fan), rng);
            let bias = (bias_len > 0).then(|| params.add(format!("{name}.bias"), &[bias_len], Init::FanIn(fan), rng));
            (weight, bias)
        };
        let mut down = Vec::with_capacity(cfg.depth);
        let mut down0_context = 0;
        for l in 0..cfg.depth {
            if l == 0 {
                let fan = (SPATIAL_CHANNELS + ctx) * k * k;
                let (weight, bias) = conv(params, "down0".into(), [f, SPATIAL_CHANNELS, k, k], fan, f);
                down0_context = conv(params, "down0.context".into(), [f, ctx, k, k], fan, 0).0;
                down.push(ConvParams { weight, bias: bias.unwrap() });
            } else {
                let (weight, bias) = conv(params, format!("down{l}"), [f, f, k, k], f * k * k, f);
                down.push(ConvParams { weight, bias: bias.unwrap() });
            }
        }
        let mut up = Vec::with_capacity(cfg.depth);
        for l in (0..cfg.depth).rev() {
            let c_in = if l + 1 == cfg.depth || !cfg.skips { f } else { 2 * f };
            let (weight, bias) = conv(params, format!("up{l}"), [c_in, f, k, k], c_in * k * k, f);
            up.push(ConvParams { weight, bias: bias.unwrap() });
        }
        let fan = if cfg.skips { f + SPATIAL_CHANNELS + ctx } else { f };
        let (out_weight, out_bias) = conv(params, "out".into(), [2, f, 1, 1], fan, 2);
        let (out_spatial, out_context) = if cfg.skips {
            (
                Some(conv(params, "out.spatial".into(), [2, SPATIAL_CHANNELS, 1, 1], fan, 0).0),
                Some(conv(params, "out.context".into(), [2, ctx, 1, 1], fan, 0).0),
            )
        } else {
            (None, None)
        };
        Hourglass {
            down,
            down0_context,
            up,
            out_weight,
            out_bias: out_bias.unwrap(),
            out_spatial,
            out_context,
        }
    }

    /// Builds V from the grid and encoder outputs and runs the hourglass,
    /// spatial softmax and soft-argmax.
    pub fn apply(
        &self,
        g: &mut Graph,
        vars: &[Var],
        grid: &GridEncoding,
        selector1: Var,
        selector2: Var,
        context: Var,
    ) -> Result<GroundingVars> {
        let (w, h) = (grid.width, grid.height);
        let u1 = g.correlate(selector1, &grid.cells, &[1, w, h])?;
        let u2 = g.correlate(selector2, &grid.cells, &[1, w, h])?;
        let sizes = g.input(Tensor::new(vec![1, w, h], grid.sizes.clone())?);
        let spatial = g.concat(&[u1, u2, sizes], 0)?;

        let mut down = Vec::with_capacity(self.down.len());
        let mut cur = spatial;
        for (l, p) in self.down.iter().enumerate() {
            let pre = g.conv2d(cur, vars[p.weight], Some(vars[p.bias]), 2, Padding::Same)?;
            let pre = if l == 0 {
                let ctx = g.conv2d_tiled(context, vars[self.down0_context], w, h, 2, Padding::Same)?;
                g.add(pre, ctx)?
            } else {
                pre
            };
            cur = g.elu(pre)?;
            down.push(cur);
        }

        let skips = self.out_spatial.is_some();
        let mut up = Vec::with_capacity(self.up.len());
        for (step, p) in self.up.iter().enumerate() {
            let level = self.down.len() - step;
            let input = if step == 0 || !skips {
                cur
            } else {
                g.concat(&[cur, down[level - 1]], 0)?
            };
            let pre = g.conv_transpose2d(input, vars[p.weight], Some(vars[p.bias]), 2)?;
            cur = g.elu(pre)?;
            up.push(cur);
        }

        let mut logits = g.conv2d(cur, vars[self.out_weight], Some(vars[self.out_bias]), 1, Padding::Same)?;
        if let (Some(sp), Some(cx)) = (self.out_spatial, self.out_context) {
            let a = g.conv2d(spatial, vars[sp], None, 1, Padding::Same)?;
            let b = g.conv2d_tiled(context, vars[cx], w, h, 1, Padding::Same)?;
            let ab = g.add(a, b)?;
            logits = g.add(logits, ab)?;
        }
        let flat = g.reshape(logits, &[2, w * h])?;
        let norm = g.softmax(flat, 1)?;
        let heatmaps = g.reshape(norm, &[2, w, h])?;
        let pixel = g.soft_argmax(heatmaps)?;
        Ok(GroundingVars {
            u1,
            u2,
            spatial,
            down,
            up,
            logits,
            heatmaps,
            pixel,
        })
    }
}
