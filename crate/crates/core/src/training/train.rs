use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{backprop_grads, pc_weight_grads, pc_weight_grads_at, OptimizerConfig, OptimizerState, Schedule};
use crate::dataio::{Cell, Dataset};
use crate::epc::{epc_relax, states_to_errors, EpcRelaxConfig};
use crate::error::{PcError, Result};
use crate::model::{loss_and_grad, Network};
use crate::numeric::Matrix;
use crate::spc::spc_relax;
use crate::trace::RelaxConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainAlgorithm {
    Spc,
    Epc,
    Backprop,
}

impl std::str::FromStr for TrainAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spc" => Ok(TrainAlgorithm::Spc),
            "epc" => Ok(TrainAlgorithm::Epc),
            "backprop" | "bp" => Ok(TrainAlgorithm::Backprop),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: TrainAlgorithm,
    /// State or error step size `λ` (ignored by backprop).
    pub relax_lr: f64,
    /// Relaxation steps `T` per batch (ignored by backprop).
    pub relax_steps: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the training data held out for validation.
    pub val_fraction: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: TrainAlgorithm::Backprop,
            relax_lr: 0.1,
            relax_steps: 4,
            optimizer: OptimizerConfig::adam(1e-4),
            schedule: Schedule::WarmupCosine,
            epochs: 1,
            batch_size: 64,
            seed: 42,
            val_fraction: 0.1,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(PcError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(PcError::InvalidConfig("weight lr must be positive".into()));
        }
        if self.algorithm != TrainAlgorithm::Backprop {
            RelaxConfig::<f64>::new(self.relax_lr, self.relax_steps).validate()?;
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(PcError::InvalidConfig("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Sample-weighted mean feedforward loss over the epoch's batches, taken
    /// before each batch's update.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub wall_ms: f64,
}

pub const METRICS_HEADER: [&str; 4] = ["epoch", "train_loss", "val_accuracy", "wall_ms"];

pub fn metrics_rows(metrics: &[EpochMetrics]) -> Vec<Vec<Cell>> {
    metrics
        .iter()
        .map(|m| {
            vec![
                Cell::from(m.epoch),
                Cell::from(m.train_loss),
                Cell::from(m.val_accuracy),
                Cell::from(m.wall_ms),
            ]
        })
        .collect()
}

/// Gradient of one batch under the configured algorithm.
pub fn batch_grads(net: &Network, x: &Matrix, y: &Matrix, cfg: &TrainConfig, guard: bool) -> Result<super::WeightGrads> {
    match cfg.algorithm {
        TrainAlgorithm::Backprop => backprop_grads(net, x, y),
        TrainAlgorithm::Spc => {
            let rc = RelaxConfig::new(cfg.relax_lr, cfg.relax_steps).with_record_every(cfg.relax_steps);
            let (s, _) = spc_relax(net, x, y, &rc)?;
            let e = states_to_errors(net, x, &s)?;
            pc_weight_grads_at(net, x, y, &s, &e)
        }
        TrainAlgorithm::Epc => {
            let mut rc = EpcRelaxConfig::new(cfg.relax_lr, cfg.relax_steps);
            rc.relax.record_every = cfg.relax_steps;
            rc.guard_backprop_regime = guard;
            let (e, _) = epc_relax(net, x, y, &rc)?;
            pc_weight_grads(net, x, &e, y)
        }
    }
}

/// Trains a copy of `net`: per batch, relax (for sPC/ePC) and take one
/// optimizer step on the resulting weight gradients.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if data.input_dim() != net.input_dim() || data.num_classes != net.output_dim() {
        return Err(PcError::mismatch(
            "train",
            (data.input_dim(), data.num_classes),
            (net.input_dim(), net.output_dim()),
        ));
    }
    let mut net = net.clone();
    let (train_set, val_set) = if cfg.val_fraction > 0.0 {
        let (t, v) = data.split_validation(cfg.val_fraction, cfg.seed)?;
        (t, Some(v))
    } else {
        (data.clone(), None)
    };
    let per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &net);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut global = 0usize;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for (b, batch) in train_set
            .batches(cfg.batch_size, cfg.seed, epoch as u64, cfg.shuffle)
            .enumerate()
        {
            let context = || format!("epoch {} batch {b}", epoch + 1);
            let y_hat = net.forward(&batch.x)?.y_hat;
            let (loss, _) = loss_and_grad(net.loss(), &y_hat, &batch.y)?;
            if !loss.is_finite() {
                return Err(PcError::NonFinite { context: context() });
            }
            loss_sum += loss * batch.labels.len() as f64;
            let grads = match batch_grads(&net, &batch.x, &batch.y, cfg, global == 0) {
                Err(PcError::Divergence { step, energy }) => {
                    log::error!("{}: relaxation diverged at step {step}", context());
                    return Err(PcError::Divergence { step, energy });
                }
                other => other?,
            };
            if !grads.is_finite() {
                return Err(PcError::NonFinite { context: context() });
            }
            let lr = cfg.schedule.lr_at(cfg.optimizer.lr, global, total);
            opt.step(&mut net, &grads, lr)?;
            global += 1;
        }
        let val_accuracy = val_set.as_ref().map(|v| evaluate(&net, v));
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len().max(1) as f64,
            val_accuracy,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::info!(
            "epoch {}: train_loss {:.5} val_acc {:?} ({:.0} ms)",
            m.epoch,
            m.train_loss,
            m.val_accuracy,
            m.wall_ms
        );
        metrics.push(m);
    }
    Ok((net, metrics))
}

/// Index of the largest entry (first on ties).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose output argmax equals the label. Logits are
/// used directly for cross-entropy nets. `NaN` for an empty dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut correct = 0usize;
    for batch in data.batches(1024, 0, 0, false) {
        let out = match net.forward(&batch.x) {
            Ok(fp) => fp.y_hat,
            Err(_) => return f64::NAN,
        };
        correct += (0..out.rows())
            .filter(|&r| argmax(out.row(r)) == batch.labels[r])
            .count();
    }
    correct as f64 / data.len() as f64
}
