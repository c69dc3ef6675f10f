//! Error-based relaxation: the prediction errors are the free variables and
//! states are rebuilt by an error-perturbed forward pass.

use crate::analysis::jacobian_at_states;
use crate::error::{PcError, Result};
use crate::model::{per_sample_loss, EnergyReport, ErrorConfig, Network, StateConfig};
use crate::numeric::{Matrix, Real};
use crate::spc::state_grad;
use crate::trace::{run_relaxation, Algo, Evaluation, RelaxConfig, RelaxTrace};

/// Largest total hidden width for which `J = ∂s/∂e` is built explicitly.
pub const JACOBIAN_DIM_CAP: usize = 64;

/// [`RelaxConfig`] plus the exact-backprop regime check.
#[derive(Debug, Clone)]
pub struct EpcRelaxConfig<T = f64> {
    pub relax: RelaxConfig<T>,
    /// Warn when the settings make the run indistinguishable from backprop.
    pub guard_backprop_regime: bool,
}

impl<T: Real> EpcRelaxConfig<T> {
    pub fn new(lr: f64, steps: usize) -> Self {
        EpcRelaxConfig {
            relax: RelaxConfig::new(lr, steps),
            guard_backprop_regime: true,
        }
    }
}

impl<T> From<RelaxConfig<T>> for EpcRelaxConfig<T> {
    fn from(relax: RelaxConfig<T>) -> Self {
        EpcRelaxConfig {
            relax,
            guard_backprop_regime: true,
        }
    }
}

/// `e_i = s_i − f_i(s_{i-1})`.
pub fn states_to_errors<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    s: &StateConfig<T>,
) -> Result<ErrorConfig<T>> {
    net.prediction_errors(x, s)
}

/// `s_i = f_i(s_{i-1}) + e_i`, applied recursively from the input.
pub fn errors_to_states<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    e: &ErrorConfig<T>,
) -> Result<StateConfig<T>> {
    Ok(net.perturbed_forward(x, e)?.0)
}

/// Energy and per-sample error gradients `e_i + (∂ŷ/∂e_i)ᵀ∇_ŷ𝓛`, from a
/// single reverse sweep over the perturbed forward pass.
pub fn epc_eval<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    e: &[Matrix<T>],
) -> Result<Evaluation<T>> {
    net.check_target(x, y)?;
    let e_cfg = ErrorConfig(e.to_vec());
    let (StateConfig(states), y_hat) = net.perturbed_forward(x, &e_cfg)?;
    let (loss_values, loss_grad) = per_sample_loss(net.loss(), &y_hat, y)?;
    let l = net.num_hidden();
    let mut grads = vec![Matrix::zeros(0, 0); l];
    let mut cot = loss_grad;
    for i in (0..l).rev() {
        // ∂s_i/∂e_i = I, so the cotangent reaching s_i is the one for e_i.
        cot = net.layer(i + 1).vjp_input(&states[i], &cot)?;
        let mut g = cot.clone();
        g.add_assign(&e[i])?;
        grads[i] = g;
    }
    Ok(Evaluation {
        report: EnergyReport::from_parts(e, &loss_values),
        grads,
        states: Some(states),
    })
}

/// Per-sample gradient of the energy with respect to each error variable.
pub fn error_grad<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    e: &ErrorConfig<T>,
) -> Result<Vec<Matrix<T>>> {
    Ok(epc_eval(net, x, y, &e.0)?.grads)
}

/// `T` SGD steps `e ← e − λ∇_e E` starting from `e = 0`.
pub fn epc_relax<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    cfg: &EpcRelaxConfig<T>,
) -> Result<(ErrorConfig<T>, RelaxTrace)> {
    net.check_target(x, y)?;
    let mut e = ErrorConfig::zeros_like(net, x.rows());
    let mut trace = run_relaxation(Algo::Epc, &cfg.relax, &mut e.0, |vars| epc_eval(net, x, y, vars))?;
    if cfg.guard_backprop_regime {
        let y0 = net.forward(x)?.y_hat;
        let (_, y1) = net.perturbed_forward(x, &e)?;
        let change = relative_change(&y0, &y1);
        if let Some(w) = backprop_regime_warning(cfg.relax.lr, cfg.relax.steps, change) {
            log::warn!("{w}");
            trace.warnings.push(w);
        }
    }
    Ok((e, trace))
}

fn relative_change<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    let diff = a.zip_map(b, |u, v| u - v).frobenius_sq().as_f64().sqrt();
    let base = a.frobenius_sq().as_f64().sqrt();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Product `λ·T` at or below which a nearly unchanged output counts as the
/// backprop regime.
pub const BACKPROP_LR_STEPS: f64 = 0.01;
/// Relative output change below which the output counts as unchanged.
pub const BACKPROP_OUTPUT_CHANGE: f64 = 1e-3;

/// Heuristic check for settings under which error relaxation collapses to
/// scaled backpropagation.
pub fn backprop_regime_warning(lr: f64, steps: usize, output_change: f64) -> Option<String> {
    if steps == 1 {
        return Some(
            "a single error update yields exactly λ-scaled backprop weight gradients".into(),
        );
    }
    let lt = lr * steps as f64;
    if lt <= BACKPROP_LR_STEPS && output_change < BACKPROP_OUTPUT_CHANGE {
        return Some(format!(
            "λ·T = {lt:e} with relative output change {output_change:e}: the update is \
             indistinguishable from λT-scaled backprop"
        ));
    }
    None
}

/// `max |∇_e E − Jᵀ ∇_s E|` over the batch, with `J = ∂s/∂e` built
/// explicitly at each sample's states.
pub fn gradient_relation_residual(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    s: &StateConfig,
) -> Result<f64> {
    let dim = net.total_hidden_dim();
    if dim > JACOBIAN_DIM_CAP {
        return Err(PcError::CapExceeded {
            dim,
            cap: JACOBIAN_DIM_CAP,
        });
    }
    let gs = state_grad(net, x, y, s)?;
    let e = states_to_errors(net, x, s)?;
    let ge = error_grad(net, x, y, &e)?;
    let gs = StateConfig(gs);
    let ge = ErrorConfig(ge);
    let mut worst = 0.0f64;
    for b in 0..x.rows() {
        let sb = s.select_rows(&[b]);
        let j = jacobian_at_states(net, &sb, JACOBIAN_DIM_CAP)?;
        let g_s = gs.sample_vector(b);
        let g_e = ge.sample_vector(b);
        let jt_gs = j.transpose().matvec(&g_s)?;
        for (a, c) in g_e.iter().zip(jt_gs.iter()) {
            worst = worst.max((a - c).abs());
        }
    }
    Ok(worst)
}
