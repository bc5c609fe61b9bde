use rand::Rng as _;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Initialization scheme for a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform on (-bound, bound).
    Uniform(f64),
    /// Uniform on (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    FanIn(usize),
}

/// Named trainable tensors with gradient accumulators, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    touched: Vec<bool>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut Rng) -> usize {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Constant(c) => vec![c; n],
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..b)).collect(),
            Init::FanIn(fan_in) => {
                let b = 1.0 / (fan_in.max(1) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-b..b)).collect()
            }
        };
        self.insert(name.into(), Tensor::from_raw(shape.to_vec(), data))
    }

    pub fn insert(&mut self, name: String, value: Tensor) -> usize {
        self.grads.push(vec![0.0; value.len()]);
        self.touched.push(false);
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn grad(&self, i: usize) -> &[f64] {
        &self.grads[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Adds every parameter to `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| graph.leaf(v.clone())).collect()
    }

    /// Adds the leaf gradients of a bound graph into the accumulators.
    pub fn accumulate(&mut self, graph: &Graph, bound: &[Var]) {
        for ((acc, &v), t) in self.grads.iter_mut().zip(bound).zip(&mut self.touched) {
            if let Some(g) = graph.grad(v) {
                *t = true;
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    /// Adds an externally computed gradient for parameter `i`.
    pub fn accumulate_one(&mut self, i: usize, grad: &[f64]) -> Result<()> {
        if grad.len() != self.grads[i].len() {
            return Err(Error::Shape(format!("gradient length mismatch for `{}`", self.names[i])));
        }
        for (a, b) in self.grads[i].iter_mut().zip(grad) {
            *a += b;
        }
        self.touched[i] = true;
        Ok(())
    }

    pub fn scale_grads(&mut self, factor: f64) {
        self.grads.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
        self.touched.fill(false);
    }

    /// Whether parameter `i` received a gradient since the last reset.
    pub fn has_grad(&self, i: usize) -> bool {
        self.touched[i]
    }

    pub(crate) fn split_mut(&mut self) -> (&mut [Tensor], &[Vec<f64>], &[String], &[bool]) {
        (&mut self.values, &self.grads, &self.names, &self.touched)
    }
}
