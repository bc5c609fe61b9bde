use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::layers::{BiLstm, Linear};
use crate::tensor::{Graph, Init, ParamSet, Var};
use crate::text::{Embedding, MAX_TOKENS};

/// Instruction encoder: embeddings, BiLSTM, four attention heads from a
/// 1-D convolution over the hidden sequence, pooled embeddings and the two
/// object-selector projections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub embedding: Embedding,
    pub bilstm: BiLstm,
    pub attn_weight: usize,
    pub attn_bias: usize,
    /// Selector projections; only the grid model has them.
    pub selectors: Option<(Linear, Linear)>,
}

/// Graph nodes produced by [`Encoder::apply`].
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    /// N_T×D
    pub embeddings: Var,
    /// 4×N_T, rows on the simplex.
    pub attention: Var,
    /// 4×D, row j is ê_j.
    pub pooled: Var,
    /// Two 1×N_o selectors, when the encoder has projections.
    pub selectors: Option<(Var, Var)>,
    /// 2D values: ê_3 then ê_4.
    pub context: Var,
}

impl Encoder {
    pub fn register(params: &mut ParamSet, cfg: &ModelConfig, with_selectors: bool, rng: &mut Rng) -> Self {
        let d = cfg.embed_dim;
        let embedding = Embedding::register(params, "embed", cfg.vocab_size, d, rng);
        let bilstm = BiLstm::register(params, "bilstm", d, cfg.hidden, cfg.lstm_layers, rng);
        let fan = 2 * cfg.hidden * cfg.attention_kernel;
        let attn_weight = params.add(
            "attention.weight",
            &[4, 2 * cfg.hidden, cfg.attention_kernel],
            Init::FanIn(fan),
            rng,
        );
        let attn_bias = params.add("attention.bias", &[4], Init::FanIn(fan), rng);
        let selectors = with_selectors.then(|| {
            (
                Linear::register(params, "select1", d, cfg.n_types, rng),
                Linear::register(params, "select2", d, cfg.n_types, rng),
            )
        });
        Encoder {
            embedding,
            bilstm,
            attn_weight,
            attn_bias,
            selectors,
        }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], ids: &[usize]) -> Result<EncoderVars> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("instruction has no tokens".into()));
        }
        if ids.len() > MAX_TOKENS {
            return Err(Error::Range(format!(
                "instruction has {} tokens, limit is {MAX_TOKENS}",
                ids.len()
            )));
        }
        let d = self.embedding.dim;
        let embeddings = self.embedding.apply(g, vars, ids)?;
        let hidden = self.bilstm.apply(g, vars, embeddings)?;
        let seq = g.transpose(hidden)?;
        let energies = g.conv1d(seq, vars[self.attn_weight], Some(vars[self.attn_bias]))?;
        let attention = g.softmax(energies, 1)?;
        let pooled = g.matmul(attention, embeddings)?;
        let selectors = match &self.selectors {
            Some((p1, p2)) => {
                let e1 = g.slice(pooled, 0, 0, 1)?;
                let e2 = g.slice(pooled, 0, 1, 1)?;
                Some((p1.apply(g, vars, e1)?, p2.apply(g, vars, e2)?))
            }
            None => None,
        };
        let rest = g.slice(pooled, 0, 2, 2)?;
        let context = g.reshape(rest, &[2 * d])?;
        Ok(EncoderVars {
            embeddings,
            attention,
            pooled,
            selectors,
            context,
        })
    }
}
