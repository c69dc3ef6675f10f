use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{backprop_grads, pc_weight_grads_at, WeightGrads};
use crate::epc::epc_eval;
use crate::error::{PcError, Result};
use crate::model::{ErrorConfig, Network, StateConfig};
use crate::numeric::Matrix;
use crate::spc::{init_states_feedforward, spc_eval};
use crate::trace::Algo;

/// Where the layer Jacobians of the weight update are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianPoint {
    /// At the states that produced the latest variable update, i.e. the
    /// forward pass the errors were computed from.
    #[default]
    Previous,
    /// At the states of the current configuration.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// Per-layer weight-gradient norms (output layer last).
    pub norms: Vec<f64>,
    /// Per-layer cosine similarity to the backprop gradient.
    pub cosines: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientTrajectory {
    pub algo: Algo,
    pub lr: f64,
    pub backprop: WeightGrads,
    pub points: Vec<TrajectoryPoint>,
    /// Weight gradients after the last step.
    pub final_grads: WeightGrads,
    /// Weight gradients after the first step (equal to the final ones for
    /// `T = 0`).
    pub first_step_grads: WeightGrads,
}

/// Weight gradients the relaxation would hand to the optimizer if stopped at
/// each step `0..=T`, compared against backprop.
pub fn gradient_trajectory(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    algo: Algo,
    steps: usize,
    lr: f64,
) -> Result<GradientTrajectory> {
    gradient_trajectory_with(net, x, y, algo, steps, lr, JacobianPoint::Previous)
}

pub fn gradient_trajectory_with(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    algo: Algo,
    steps: usize,
    lr: f64,
    point: JacobianPoint,
) -> Result<GradientTrajectory> {
    if !(lr > 0.0) {
        return Err(PcError::InvalidConfig(format!("lr must be positive, got {lr}")));
    }
    let bp = backprop_grads(net, x, y)?;
    let mut vars: Vec<Matrix> = match algo {
        Algo::Spc => init_states_feedforward(net, x)?.0,
        Algo::Epc => ErrorConfig::zeros_like(net, x.rows()).0,
    };
    let mut prev_states: Option<StateConfig> = None;
    let mut points = Vec::with_capacity(steps + 1);
    let mut first = None;
    let mut last = None;
    for t in 0..=steps {
        let (ev, states, errors) = match algo {
            Algo::Spc => {
                let ev = spc_eval(net, x, y, &vars)?;
                let s = StateConfig(vars.clone());
                let e = net.prediction_errors(x, &s)?;
                (ev, s, e)
            }
            Algo::Epc => {
                let mut ev = epc_eval(net, x, y, &vars)?;
                let s = StateConfig(ev.states.take().expect("reconstructed states"));
                (ev, s, ErrorConfig(vars.clone()))
            }
        };
        let at = match (point, &prev_states) {
            (JacobianPoint::Previous, Some(p)) => p,
            _ => &states,
        };
        let g = pc_weight_grads_at(net, x, y, at, &errors)?;
        points.push(TrajectoryPoint {
            step: t,
            norms: g.norms(),
            cosines: g.cosines(&bp),
        });
        if t == 1 {
            first = Some(g.clone());
        }
        last = Some(g);
        if t == steps {
            break;
        }
        for (v, gi) in vars.iter_mut().zip(&ev.grads) {
            v.axpy(-lr, gi)?;
        }
        prev_states = Some(states);
    }
    let final_grads = last.expect("at least one point");
    Ok(GradientTrajectory {
        algo,
        lr,
        backprop: bp,
        points,
        first_step_grads: first.unwrap_or_else(|| final_grads.clone()),
        final_grads,
    })
}

impl GradientTrajectory {
    /// CSV with columns `algo, step, norm_0.., cos_0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let all: Vec<usize> = (0..self.backprop.num_layers()).collect();
        self.write_csv_layers(out, &all)
    }

    /// Same, restricted to the given layer indices.
    pub fn write_csv_layers<W: Write>(&self, out: W, layers: &[usize]) -> Result<()> {
        let n = self.backprop.num_layers();
        if let Some(&bad) = layers.iter().find(|&&i| i >= n) {
            return Err(PcError::InvalidConfig(format!("layer {bad} out of range (net has {n})")));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["algo".to_string(), "step".to_string()];
        header.extend(layers.iter().map(|i| format!("norm_{i}")));
        header.extend(layers.iter().map(|i| format!("cos_{i}")));
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![self.algo.name().to_string(), p.step.to_string()];
            row.extend(layers.iter().map(|&i| format!("{:e}", p.norms[i])));
            row.extend(layers.iter().map(|&i| format!("{:.17}", p.cosines[i])));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| PcError::io("<csv>", e))?;
        Ok(())
    }
}
