//! Randomized equivalence suite between the state and error formulations.

use serde::{Deserialize, Serialize};

use crate::analysis::{analytic_equilibrium_linear, hessian_inertia_check, jacobian_at_states};
use crate::epc::{error_grad, errors_to_states, states_to_errors, JACOBIAN_DIM_CAP};
use crate::error::{PcError, Result};
use crate::model::{Activation, ErrorConfig, Loss, MlpSpec, Network, StateConfig};
use crate::numeric::{determinant, Matrix, Rng};
use crate::spc::{init_states_feedforward, state_grad};
use crate::training::{backprop_grads, pc_weight_grads_at};

pub const TOL_BIJECTION: f64 = 1e-12;
pub const TOL_ENERGY: f64 = 1e-10;
pub const TOL_GRADIENT_RELATION: f64 = 1e-8;
pub const TOL_DETERMINANT: f64 = 1e-9;
pub const TOL_BACKPROP_REDUCTION: f64 = 1e-10;

/// Deliberate corruption used to confirm that a check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates `∇_e E` before it is compared with `Jᵀ∇_s E`.
    FlipErrorGradSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random networks per check.
    pub nets: usize,
    /// Weight layers are drawn from `2..=max_layers`.
    pub max_layers: usize,
    pub max_width: usize,
    pub batch: usize,
    /// Step size of the single-update backprop check.
    pub lr: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            nets: 12,
            max_layers: 6,
            max_width: 8,
            batch: 4,
            lr: 0.1,
            fault: None,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nets == 0 || self.batch == 0 || self.max_width == 0 {
            return Err(PcError::InvalidConfig("nets, batch and max_width must be positive".into()));
        }
        if self.max_layers < 2 {
            return Err(PcError::InvalidConfig("max_layers must be at least 2".into()));
        }
        if (self.max_layers - 1) * self.max_width > JACOBIAN_DIM_CAP {
            return Err(PcError::InvalidConfig(format!(
                "hidden width up to {} exceeds the Jacobian cap {JACOBIAN_DIM_CAP}",
                (self.max_layers - 1) * self.max_width
            )));
        }
        if !(self.lr > 0.0) {
            return Err(PcError::InvalidConfig("lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst residual over all random instances.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// A random MLP with `layers` weight layers and widths in `1..=max_width`.
pub fn random_network(rng: &mut Rng, layers: usize, max_width: usize, activation: Activation, loss: Loss) -> Result<Network> {
    let mut dims: Vec<usize> = (0..=layers).map(|_| 1 + rng.below(max_width)).collect();
    if loss == Loss::CrossEntropy {
        // Softmax over a single class is constant.
        let last = dims.len() - 1;
        dims[last] = dims[last].max(2);
    }
    let spec = MlpSpec {
        dims,
        activation,
        output_activation: Activation::Identity,
        loss,
        gain: 1.0,
    };
    let mut net = Network::mlp(&spec, rng)?;
    // Nonzero biases so that bias paths are exercised too.
    for layer in net.layers_mut() {
        for b in layer.bias.iter_mut() {
            *b = 0.5 * rng.normal();
        }
    }
    Ok(net)
}

/// Inputs and targets matching `net`: Gaussian inputs, Gaussian targets for
/// MSE and random one-hot rows for cross-entropy.
pub fn random_batch(rng: &mut Rng, net: &Network, batch: usize) -> (Matrix, Matrix) {
    let x = Matrix::from_fn(batch, net.input_dim(), |_, _| rng.normal());
    let k = net.output_dim();
    let y = match net.loss() {
        Loss::Mse => Matrix::from_fn(batch, k, |_, _| rng.normal()),
        Loss::CrossEntropy => {
            let classes: Vec<usize> = (0..batch).map(|_| rng.below(k)).collect();
            Matrix::from_fn(batch, k, |r, c| if c == classes[r] { 1.0 } else { 0.0 })
        }
    };
    (x, y)
}

pub fn random_states(rng: &mut Rng, net: &Network, batch: usize) -> StateConfig {
    StateConfig(
        net.hidden_dims()
            .into_iter()
            .map(|d| Matrix::from_fn(batch, d, |_, _| rng.normal()))
            .collect(),
    )
}

/// Weight gradients after one error update from `e = 0`, evaluated at the
/// feedforward states, against `λ`-scaled backprop (hidden layers) and plain
/// backprop (output layer). Returns the worst relative error.
pub fn single_step_reduction_error(net: &Network, x: &Matrix, y: &Matrix, lr: f64) -> Result<f64> {
    let s0 = init_states_feedforward(net, x)?;
    let e0 = ErrorConfig::zeros_like(net, x.rows());
    let g = error_grad(net, x, y, &e0)?;
    let e1 = ErrorConfig(g.iter().map(|m| m.scale(-lr)).collect());
    let pc = pc_weight_grads_at(net, x, y, &s0, &e1)?;
    let bp = backprop_grads(net, x, y)?;
    let l = net.num_hidden();
    let mut scaled = bp.scale(lr);
    scaled.0[l] = bp.0[l].clone();
    Ok(pc.max_rel_err(&scaled, 1e-300))
}

struct Worst {
    residual: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            residual: 0.0,
            at: String::new(),
        }
    }

    fn update(&mut self, r: f64, at: impl FnOnce() -> String) {
        // NaN residuals must register as failures.
        if r.is_nan() || r > self.residual {
            self.residual = if r.is_nan() { f64::INFINITY } else { r };
            self.at = at();
        }
    }

    fn finish(self, name: &str, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            passed: self.residual <= tolerance,
            residual: self.residual,
            tolerance,
            detail: self.at,
        }
    }
}

fn max_abs_diff(a: &[Matrix], b: &[Matrix]) -> Result<f64> {
    let mut m = 0.0f64;
    for (u, v) in a.iter().zip(b) {
        m = m.max(u.max_abs_diff(v).ok_or_else(|| PcError::mismatch("compare", u.shape(), v.shape()))?);
    }
    Ok(m)
}

/// Runs every check; failures are reported, not returned as errors.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut bijection = Worst::new();
    let mut energy = Worst::new();
    let mut relation = Worst::new();
    let mut det = Worst::new();
    let mut reduction = Worst::new();
    let mut k = 0u64;
    for act in Activation::ALL {
        for loss in [Loss::Mse, Loss::CrossEntropy] {
            for n in 0..cfg.nets {
                let mut rng = root.fork(k);
                k += 1;
                let layers = 2 + rng.below(cfg.max_layers - 1);
                let net = random_network(&mut rng, layers, cfg.max_width, act, loss)?;
                let (x, y) = random_batch(&mut rng, &net, cfg.batch);
                let s = random_states(&mut rng, &net, cfg.batch);
                let tag = || format!("{}/{} net {n} ({} layers)", act.name(), loss.name(), layers);

                let e = states_to_errors(&net, &x, &s)?;
                let s_back = errors_to_states(&net, &x, &e)?;
                let e_back = states_to_errors(&net, &x, &s_back)?;
                let r = max_abs_diff(&s.0, &s_back.0)?.max(max_abs_diff(&e.0, &e_back.0)?);
                bijection.update(r, tag);

                let es = net.energy_spc(&x, &y, &s)?.total;
                let ee = net.energy_epc(&x, &y, &e)?.total;
                energy.update((es - ee).abs() / es.abs().max(1.0), tag);

                let gs = StateConfig(state_grad(&net, &x, &y, &s)?);
                let mut ge = ErrorConfig(error_grad(&net, &x, &y, &e)?);
                if cfg.fault == Some(Fault::FlipErrorGradSign) {
                    ge.0.iter_mut().for_each(|m| *m = m.scale(-1.0));
                }
                for b in 0..cfg.batch {
                    let j = jacobian_at_states(&net, &s.select_rows(&[b]), JACOBIAN_DIM_CAP)?;
                    let jt_gs = j.transpose().matvec(&gs.sample_vector(b))?;
                    let r = ge
                        .sample_vector(b)
                        .iter()
                        .zip(&jt_gs)
                        .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
                    relation.update(r, tag);
                    det.update((determinant(&j)? - 1.0).abs(), tag);
                }

                reduction.update(single_step_reduction_error(&net, &x, &y, cfg.lr)?, tag);
            }
        }
    }

    let mut checks = vec![
        bijection.finish("bijection_roundtrip", TOL_BIJECTION),
        energy.finish("energy_equality", TOL_ENERGY),
        relation.finish("gradient_relation", TOL_GRADIENT_RELATION),
        det.finish("jacobian_determinant", TOL_DETERMINANT),
        reduction.finish("single_step_backprop", TOL_BACKPROP_REDUCTION),
    ];
    checks.push(inertia_check(cfg, &root)?);
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        log::info!(
            "{} {}: residual {:e} (tol {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        );
    }
    Ok(VerifyReport { checks, passed })
}

/// Hessian signatures over states and errors at the optimum of linear MSE
/// nets; the residual counts mismatching instances.
fn inertia_check(cfg: &VerifyConfig, root: &Rng) -> Result<CheckResult> {
    let mut mismatches = 0usize;
    let mut detail = String::new();
    for n in 0..cfg.nets {
        let mut rng = root.fork(1_000_000 + n as u64);
        let layers = 2 + rng.below(cfg.max_layers - 1);
        let net = random_network(&mut rng, layers, cfg.max_width, Activation::Identity, Loss::Mse)?;
        let (x, y) = random_batch(&mut rng, &net, 1);
        let star = analytic_equilibrium_linear(&net, &x, &y)?;
        let rep = hessian_inertia_check(&net, &x, &y, &star)?;
        if !rep.matches {
            mismatches += 1;
            detail = format!("net {n}: {:?} vs {:?}", rep.signature_s, rep.signature_e);
        }
    }
    Ok(CheckResult {
        name: "hessian_inertia".into(),
        residual: mismatches as f64,
        tolerance: 0.0,
        passed: mismatches == 0,
        detail,
    })
}
