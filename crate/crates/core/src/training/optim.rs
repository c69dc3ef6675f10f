use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{LayerGrad, WeightGrads};
use crate::error::{PcError, Result};
use crate::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    /// Adam with decoupled weight decay.
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            ..Default::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Optimizer hyperparameters plus the first/second moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, net: &Network) -> Self {
        let zeros = WeightGrads::zeros_like(net).0;
        OptimizerState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moments(&self) -> &[LayerGrad] {
        &self.m
    }

    pub fn second_moments(&self) -> &[LayerGrad] {
        &self.v
    }

    /// Applies one update with learning rate `lr` (from the schedule).
    pub fn step(&mut self, net: &mut Network, grads: &WeightGrads, lr: f64) -> Result<()> {
        if grads.0.len() != net.layers().len() {
            return Err(PcError::mismatch(
                "optimizer step",
                (grads.0.len(), 0),
                (net.layers().len(), 0),
            ));
        }
        for (layer, g) in net.layers().iter().zip(&grads.0) {
            if g.weight.shape() != layer.weight.shape() || g.bias.len() != layer.bias.len() {
                return Err(PcError::mismatch("optimizer step", g.weight.shape(), layer.weight.shape()));
            }
        }
        self.step += 1;
        let c = self.config.clone();
        let t = self.step as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.0[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let params = layer
                .weight
                .data_mut()
                .iter_mut()
                .chain(layer.bias.iter_mut());
            let gs = g.weight.data().iter().chain(g.bias.iter());
            let ms = m.weight.data_mut().iter_mut().chain(m.bias.iter_mut());
            let vs = v.weight.data_mut().iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                match c.kind {
                    OptimizerKind::Sgd => {
                        let gi = gi + c.weight_decay * *p;
                        *p -= lr * gi;
                    }
                    OptimizerKind::Adam | OptimizerKind::Adamw => {
                        let gi = if c.kind == OptimizerKind::Adam {
                            gi + c.weight_decay * *p
                        } else {
                            *p -= lr * c.weight_decay * *p;
                            gi
                        };
                        *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                        *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                        let mh = *mi / bc1;
                        let vh = *vi / bc2;
                        *p -= lr * mh / (vh.sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Linear ramp from `lr` to `1.1·lr` over the first 10% of steps, then
    /// cosine decay to `0.1·lr`.
    WarmupCosine,
}

impl Schedule {
    /// Learning rate at 0-based `step` of `total`.
    pub fn lr_at(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::WarmupCosine => {
                let total = total.max(1) as f64;
                let warm = (0.1 * total).max(1.0);
                let s = step as f64;
                let peak = 1.1 * base;
                if s < warm {
                    base + (peak - base) * s / warm
                } else {
                    let span = (total - warm).max(1.0);
                    let p = ((s - warm) / span).min(1.0);
                    let floor = 0.1 * base;
                    floor + 0.5 * (peak - floor) * (1.0 + (PI * p).cos())
                }
            }
        }
    }
}

/// Largest absolute parameter difference between two networks of the same
/// shape.
pub fn max_param_diff(a: &Network, b: &Network) -> f64 {
    a.layers()
        .iter()
        .zip(b.layers())
        .map(|(x, y)| {
            let w = x.weight.max_abs_diff(&y.weight).unwrap_or(f64::INFINITY);
            let bias = if x.bias.len() == y.bias.len() {
                x.bias.iter().zip(y.bias.iter()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
            } else {
                f64::INFINITY
            };
            w.max(bias)
        })
        .fold(0.0, f64::max)
}
