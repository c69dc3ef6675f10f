//! Weight learning: PC and backprop gradients, optimizers, the training
//! loop, evaluation and weight-gradient trajectories.

mod grads;
mod optim;
mod train;
mod trajectory;

pub use grads::{backprop_grads, pc_weight_grads, pc_weight_grads_at, LayerGrad, WeightGrads};
pub use optim::{max_param_diff, OptimizerConfig, OptimizerKind, OptimizerState, Schedule};
pub use train::{
    argmax, batch_grads, evaluate, metrics_rows, train, EpochMetrics, TrainAlgorithm, TrainConfig,
    METRICS_HEADER,
};
pub use trajectory::{
    gradient_trajectory, gradient_trajectory_with, GradientTrajectory, JacobianPoint, TrajectoryPoint,
};
