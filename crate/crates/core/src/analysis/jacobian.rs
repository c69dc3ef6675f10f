use serde::Serialize;

use crate::epc::{error_grad, errors_to_states, states_to_errors};
use crate::error::{PcError, Result};
use crate::model::{ErrorConfig, Network, StateConfig};
use crate::numeric::{symmetric_eigenvalues, Matrix};
use crate::spc::state_grad;

/// Default cap on the total hidden width for explicit Jacobians.
pub const DEFAULT_JACOBIAN_CAP: usize = 512;
/// Cap for the Hessian-based checks.
pub const HESSIAN_DIM_CAP: usize = 64;
/// Central-difference step for numerical Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Eigenvalues with magnitude at or below this count as zero.
pub const INERTIA_THRESHOLD: f64 = 1e-7;
/// Largest gradient entry tolerated at a claimed critical point.
pub const CRITICAL_POINT_TOL: f64 = 1e-6;

fn single_sample(op: &str, rows: usize) -> Result<()> {
    if rows != 1 {
        return Err(PcError::InvalidConfig(format!("{op} works on a single sample (got a batch of {rows})")));
    }
    Ok(())
}

fn check_cap(net: &Network, cap: usize) -> Result<usize> {
    let dim = net.total_hidden_dim();
    if dim > cap {
        return Err(PcError::CapExceeded { dim, cap });
    }
    Ok(dim)
}

/// `J = ∂s/∂e` for one sample, evaluated at the states reconstructed from `e`.
pub fn build_jacobian(net: &Network, x: &Matrix, e: &ErrorConfig) -> Result<Matrix> {
    single_sample("build_jacobian", x.rows())?;
    let s = errors_to_states(net, x, e)?;
    jacobian_at_states(net, &s, DEFAULT_JACOBIAN_CAP)
}

/// `J` from explicit (single-sample) states. Block `(i, j)` for `j < i` is
/// `J_i·…·J_{j+1}` with `J_k = ∂f_k/∂s_{k-1}`; diagonal blocks are `I`.
pub fn jacobian_at_states(net: &Network, s: &StateConfig, cap: usize) -> Result<Matrix> {
    single_sample("jacobian_at_states", s.batch())?;
    let n = check_cap(net, cap)?;
    let dims = net.hidden_dims();
    let offs: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let mut j = Matrix::zeros(n, n);
    for i in 0..dims.len() {
        // Row block i: identity at (i, i), then J_i times row block i−1.
        for r in 0..dims[i] {
            j.data_mut()[(offs[i] + r) * n + offs[i] + r] = 1.0;
        }
        if i == 0 {
            continue;
        }
        let ji = net.layer(i).input_jacobian(s.0[i - 1].row(0))?;
        let prev_rows = Matrix::from_fn(dims[i - 1], offs[i], |r, c| j[(offs[i - 1] + r, c)]);
        let block = ji.matmul(&prev_rows)?;
        for r in 0..dims[i] {
            for c in 0..offs[i] {
                j.data_mut()[(offs[i] + r) * n + c] = block[(r, c)];
            }
        }
    }
    Ok(j)
}

/// Counts of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn of(eigenvalues: &[f64], threshold: f64) -> Self {
        let mut out = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for &v in eigenvalues {
            if v > threshold {
                out.positive += 1;
            } else if v < -threshold {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InertiaReport {
    pub signature_s: Inertia,
    pub signature_e: Inertia,
    pub matches: bool,
    pub eigenvalues_s: Vec<f64>,
    pub eigenvalues_e: Vec<f64>,
}

fn central_hessian(n: usize, mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>, at: &[f64]) -> Result<Matrix> {
    let h = HESSIAN_STEP;
    let mut hess = Matrix::zeros(n, n);
    let mut p = at.to_vec();
    for k in 0..n {
        p[k] = at[k] + h;
        let gp = grad(&p)?;
        p[k] = at[k] - h;
        let gm = grad(&p)?;
        p[k] = at[k];
        for r in 0..n {
            hess.data_mut()[r * n + k] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    // Symmetrize away the finite-difference asymmetry.
    let t = hess.transpose();
    Ok(hess.add(&t)?.scale(0.5))
}

/// Finite-difference Hessian of the energy over the states of one sample.
pub fn numerical_hessian_states(net: &Network, x: &Matrix, y: &Matrix, s: &StateConfig) -> Result<Matrix> {
    single_sample("numerical_hessian_states", x.rows())?;
    let n = check_cap(net, HESSIAN_DIM_CAP)?;
    central_hessian(
        n,
        |v| {
            let sv = StateConfig::from_sample_vector(net, v)?;
            Ok(StateConfig(state_grad(net, x, y, &sv)?).sample_vector(0))
        },
        &s.sample_vector(0),
    )
}

/// Finite-difference Hessian of the energy over the errors of one sample.
pub fn numerical_hessian_errors(net: &Network, x: &Matrix, y: &Matrix, e: &ErrorConfig) -> Result<Matrix> {
    single_sample("numerical_hessian_errors", x.rows())?;
    let n = check_cap(net, HESSIAN_DIM_CAP)?;
    central_hessian(
        n,
        |v| {
            let ev = ErrorConfig::from_sample_vector(net, v)?;
            Ok(ErrorConfig(error_grad(net, x, y, &ev)?).sample_vector(0))
        },
        &e.sample_vector(0),
    )
}

/// Compares eigenvalue signatures of the finite-difference Hessians over
/// states and over errors at a critical point of a single sample.
pub fn hessian_inertia_check(net: &Network, x: &Matrix, y: &Matrix, s_star: &StateConfig) -> Result<InertiaReport> {
    single_sample("hessian_inertia_check", x.rows())?;
    check_cap(net, HESSIAN_DIM_CAP)?;
    let gmax = state_grad(net, x, y, s_star)?
        .iter()
        .fold(0.0f64, |m, g| m.max(g.max_abs()));
    if gmax > CRITICAL_POINT_TOL {
        return Err(PcError::Contract(format!(
            "not a critical point: max |∇_s E| = {gmax:e} > {CRITICAL_POINT_TOL:e}"
        )));
    }
    let hs = numerical_hessian_states(net, x, y, s_star)?;
    let e_star = states_to_errors(net, x, s_star)?;
    let he = numerical_hessian_errors(net, x, y, &e_star)?;
    let eig_s = symmetric_eigenvalues(&hs)?;
    let eig_e = symmetric_eigenvalues(&he)?;
    let signature_s = Inertia::of(&eig_s, INERTIA_THRESHOLD);
    let signature_e = Inertia::of(&eig_e, INERTIA_THRESHOLD);
    Ok(InertiaReport {
        signature_s,
        signature_e,
        matches: signature_s == signature_e,
        eigenvalues_s: eig_s,
        eigenvalues_e: eig_e,
    })
}

/// `JᵀH_sJ` at the states of `s` (single sample).
pub fn congruent_error_hessian(net: &Network, x: &Matrix, y: &Matrix, s: &StateConfig) -> Result<Matrix> {
    let hs = numerical_hessian_states(net, x, y, s)?;
    let j = jacobian_at_states(net, s, HESSIAN_DIM_CAP)?;
    j.matmul_transa(&hs.matmul(&j)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer, Loss};
    use crate::numeric::Vector;

    #[test]
    fn identity_chain_jacobian() {
        let id = |d| Layer::new(Matrix::<f64>::identity(d), Vector::zeros(d), Activation::Identity).unwrap();
        let net = Network::new(vec![id(2), id(2), id(2)], Loss::Mse).unwrap();
        let x = Matrix::from_rows(&[&[0.3, 0.4]]);
        let j = build_jacobian(&net, &x, &ErrorConfig::zeros_like(&net, 1)).unwrap();
        let expect = Matrix::from_rows(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 1.0],
        ]);
        assert_eq!(j, expect);
    }

    #[test]
    fn inertia_counts() {
        let i = Inertia::of(&[-1.0, 0.0, 1e-9, 2.0, 3.0], 1e-7);
        assert_eq!((i.positive, i.negative, i.zero), (2, 1, 2));
    }

    #[test]
    fn rejects_batches() {
        let id = |d| Layer::new(Matrix::<f64>::identity(d), Vector::zeros(d), Activation::Identity).unwrap();
        let net = Network::new(vec![id(2), id(2)], Loss::Mse).unwrap();
        let x = Matrix::zeros(2, 2);
        assert!(build_jacobian(&net, &x, &ErrorConfig::zeros_like(&net, 2)).is_err());
    }
}
