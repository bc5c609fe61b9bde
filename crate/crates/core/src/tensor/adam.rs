use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// L2 coefficient added to the gradient before the moment update.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || params.values().iter().map(|v| vec![0.0; v.len()]).collect();
        Adam {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients in `params`.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        let (values, grads, names, touched) = params.split_mut();
        if values.len() != self.first.len() {
            return Err(Error::Shape("optimizer state does not match parameter set".into()));
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(Error::MissingGrad(names[i].clone()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            weight_decay: wd,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((w, g), m), v) in values.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi + wd * *wi;
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let delta = lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                if delta != 0.0 {
                    *wi -= delta;
                }
            }
        }
        Ok(())
    }
}
