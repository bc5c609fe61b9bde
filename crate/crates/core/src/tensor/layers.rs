//! Parameterized building blocks composed from graph primitives. Each block
//! registers its tensors in a [`ParamSet`] and records their indices; at
//! forward time the indices select leaves from the bound variable list.

use super::{Graph, Init, ParamSet, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::rng::Rng;

/// Affine map `x·W + b` on row vectors; W is in×out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn register(params: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let weight = params.add(format!("{name}.weight"), &[inputs, outputs], Init::FanIn(inputs), rng);
        let bias = params.add(format!("{name}.bias"), &[outputs], Init::FanIn(inputs), rng);
        Linear {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, vars[self.weight])?;
        g.add_bias(y, vars[self.bias])
    }
}

/// The three tensors of one LSTM direction, gate order (input, forget,
/// candidate, output) along the 4H axis.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// I×4H
    pub w_input: Var,
    /// H×4H
    pub w_hidden: Var,
    /// 4H
    pub bias: Var,
}

/// One LSTM step on row vectors: `x_t` is 1×I, states are 1×H.
pub fn lstm_cell(g: &mut Graph, x_t: Var, h_prev: Var, c_prev: Var, w: &LstmWeights) -> Result<(Var, Var)> {
    let projected = g.matmul(x_t, w.w_input)?;
    let projected = g.add_bias(projected, w.bias)?;
    lstm_cell_projected(g, projected, h_prev, c_prev, w.w_hidden)
}

/// LSTM step whose input projection (including bias) is already computed.
fn lstm_cell_projected(g: &mut Graph, projected: Var, h_prev: Var, c_prev: Var, w_hidden: Var) -> Result<(Var, Var)> {
    let hidden = g.shape(h_prev)[1];
    if g.shape(projected) != [1, 4 * hidden] || g.shape(c_prev) != [1, hidden] {
        return Err(shape_err!(
            "lstm cell: projection {:?} and cell {:?} do not match hidden size {hidden}",
            g.shape(projected),
            g.shape(c_prev)
        ));
    }
    let recur = g.matmul(h_prev, w_hidden)?;
    let gates = g.add(projected, recur)?;
    let i = g.slice(gates, 1, 0, hidden)?;
    let f = g.slice(gates, 1, hidden, hidden)?;
    let cand = g.slice(gates, 1, 2 * hidden, hidden)?;
    let o = g.slice(gates, 1, 3 * hidden, hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Parameter indices of one LSTM direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_input: usize,
    pub w_hidden: usize,
    pub bias: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(params: &mut ParamSet, name: &str, inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_input = params.add(format!("{name}.w_input"), &[inputs, 4 * hidden], Init::FanIn(hidden), rng);
        let w_hidden = params.add(format!("{name}.w_hidden"), &[hidden, 4 * hidden], Init::FanIn(hidden), rng);
        let bias = params.add(format!("{name}.bias"), &[4 * hidden], Init::FanIn(hidden), rng);
        // Forget-gate bias starts at +1.
        params.value_mut(bias).data_mut()[hidden..2 * hidden].fill(1.0);
        LstmParams {
            w_input,
            w_hidden,
            bias,
            hidden,
        }
    }

    pub fn weights(&self, vars: &[Var]) -> LstmWeights {
        LstmWeights {
            w_input: vars[self.w_input],
            w_hidden: vars[self.w_hidden],
            bias: vars[self.bias],
        }
    }
}

/// Runs one direction over an L×I sequence from zero states; returns L×H
/// hidden states aligned with the input positions.
pub fn lstm_sequence(g: &mut Graph, xs: Var, w: &LstmWeights, reverse: bool) -> Result<Var> {
    let len = g.shape(xs)[0];
    let hidden = g.shape(w.w_hidden)[0];
    let projected = g.matmul(xs, w.w_input)?;
    let projected = g.add_bias(projected, w.bias)?;
    let mut h = g.input(Tensor::zeros(&[1, hidden]));
    let mut c = g.input(Tensor::zeros(&[1, hidden]));
    let mut outs = vec![h; len];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in order {
        let p_t = g.slice(projected, 0, t, 1)?;
        (h, c) = lstm_cell_projected(g, p_t, h, c, w.w_hidden)?;
        outs[t] = h;
    }
    g.concat(&outs, 0)
}

/// Stacked bidirectional LSTM; each layer outputs [forward; backward]
/// concatenated per position (L×2H).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub layers: Vec<(LstmParams, LstmParams)>,
}

impl BiLstm {
    pub fn register(params: &mut ParamSet, name: &str, inputs: usize, hidden: usize, depth: usize, rng: &mut Rng) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let n_in = if l == 0 { inputs } else { 2 * hidden };
                (
                    LstmParams::register(params, &format!("{name}.l{l}.fwd"), n_in, hidden, rng),
                    LstmParams::register(params, &format!("{name}.l{l}.bwd"), n_in, hidden, rng),
                )
            })
            .collect();
        BiLstm { layers }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], xs: Var) -> Result<Var> {
        let mut cur = xs;
        for (fwd, bwd) in &self.layers {
            let f = lstm_sequence(g, cur, &fwd.weights(vars), false)?;
            let b = lstm_sequence(g, cur, &bwd.weights(vars), true)?;
            cur = g.concat(&[f, b], 1)?;
        }
        Ok(cur)
    }
}
