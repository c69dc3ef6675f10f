//! State-based relaxation: the states `s_i` are the free variables and each
//! layer only sees its own error and the error of the layer above.

use crate::error::Result;
use crate::model::{per_sample_loss, EnergyReport, ErrorConfig, Network, StateConfig};
use crate::numeric::{Matrix, Real};
use crate::trace::{run_relaxation, Algo, Evaluation, RelaxConfig, RelaxTrace};

/// Copies every feedforward prediction onto its state, so all internal
/// energies start at exactly zero.
pub fn init_states_feedforward<T: Real>(net: &Network<T>, x: &Matrix<T>) -> Result<StateConfig<T>> {
    Ok(StateConfig(net.forward(x)?.predictions))
}

/// Energy and per-sample state gradients
/// `g_i = e_i − (∂f_{i+1}/∂s_i)ᵀ e_{i+1}`, with the top layer driven by
/// `(∂f_L/∂s_{L-1})ᵀ ∇_ŷ𝓛`.
pub fn spc_eval<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    s: &[Matrix<T>],
) -> Result<Evaluation<T>> {
    net.check_target(x, y)?;
    let s_cfg = StateConfig(s.to_vec());
    let ErrorConfig(errors) = net.prediction_errors(x, &s_cfg)?;
    let l = net.num_hidden();
    let y_hat = net.output_layer().forward(&s[l - 1])?;
    let (loss_values, loss_grad) = per_sample_loss(net.loss(), &y_hat, y)?;
    let mut grads = Vec::with_capacity(l);
    for i in 0..l {
        let mut g = errors[i].clone();
        if i + 1 < l {
            let back = net.layer(i + 1).vjp_input(&s[i], &errors[i + 1])?;
            g.axpy(-T::one(), &back)?;
        } else {
            let back = net.output_layer().vjp_input(&s[i], &loss_grad)?;
            g.add_assign(&back)?;
        }
        grads.push(g);
    }
    Ok(Evaluation {
        report: EnergyReport::from_parts(&errors, &loss_values),
        grads,
        states: None,
    })
}

/// Per-sample gradient of the energy with respect to each state. For a batch
/// of one this is exactly `∇_s E`; for larger batches each row is the
/// gradient of that sample's own energy.
pub fn state_grad<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    s: &StateConfig<T>,
) -> Result<Vec<Matrix<T>>> {
    Ok(spc_eval(net, x, y, &s.0)?.grads)
}

/// `T` synchronous SGD steps `s ← s − λ g` from the feedforward
/// initialization.
pub fn spc_relax<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    cfg: &RelaxConfig<T>,
) -> Result<(StateConfig<T>, RelaxTrace)> {
    net.check_target(x, y)?;
    let mut s = init_states_feedforward(net, x)?;
    let trace = run_relaxation(Algo::Spc, cfg, &mut s.0, |vars| spc_eval(net, x, y, vars))?;
    Ok((s, trace))
}

/// Continues a relaxation from explicit states instead of the feedforward
/// initialization.
pub fn spc_relax_from<T: Real>(
    net: &Network<T>,
    x: &Matrix<T>,
    y: &Matrix<T>,
    mut s: StateConfig<T>,
    cfg: &RelaxConfig<T>,
) -> Result<(StateConfig<T>, RelaxTrace)> {
    net.check_layers(x, &s.0)?;
    let trace = run_relaxation(Algo::Spc, cfg, &mut s.0, |vars| spc_eval(net, x, y, vars))?;
    Ok((s, trace))
}
