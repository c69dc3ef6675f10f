use std::io::Write;

use crate::error::{PcError, Result};
use crate::numeric::{ln_factorial, log_binomial, Matrix};

/// Simplified wavefront model with unit Jacobians: `L` layers, step size `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel {
    pub layers: usize,
    pub lr: f64,
}

impl DecayModel {
    pub fn new(layers: usize, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr < 1.0) {
            return Err(PcError::InvalidConfig(format!("λ must lie in (0, 1), got {lr}")));
        }
        Ok(DecayModel { layers, lr })
    }
}

/// `ln[C(t,i) λⁱ (1−λ)^{t−i}]`: log-magnitude of the error `i` layers below
/// the output after `t` steps. `−∞` when the signal has not arrived (`i > t`).
pub fn binomial_magnitude(model: &DecayModel, t: u64, i: u64) -> f64 {
    if i > t {
        return f64::NEG_INFINITY;
    }
    let lb = log_binomial(t, i).expect("i ≤ t checked above");
    let lam = model.lr;
    // 0·ln(·) terms are skipped so that i = 0 or i = t stay exact.
    let a = if i == 0 { 0.0 } else { i as f64 * lam.ln() };
    let b = if t == i { 0.0 } else { (t - i) as f64 * (-lam).ln_1p() };
    lb + a + b
}

/// Iterates `m_k^{t+1} = (1−λ) m_k^t + λ m_{k−1}^t` from a unit signal at the
/// output (`k = 0`). Row `t`, column `k` is the magnitude `k` layers below
/// the output; columns run `0..=L`.
pub fn simulate_simplified_wavefront(layers: usize, lr: f64, steps: usize) -> Matrix {
    let mut m = Matrix::zeros(steps + 1, layers + 1);
    m.data_mut()[0] = 1.0;
    let w = layers + 1;
    for t in 0..steps {
        for k in 0..=layers {
            let upper_left = if k == 0 { 0.0 } else { m.data()[t * w + k - 1] };
            let v = (1.0 - lr) * m.data()[t * w + k] + lr * upper_left;
            m.data_mut()[(t + 1) * w + k] = v;
        }
    }
    m
}

/// Same recursion carried out on natural-log magnitudes with a stable
/// log-add, so that deep tables do not underflow.
pub fn simulate_simplified_wavefront_log(layers: usize, lr: f64, steps: usize) -> Matrix {
    let mut m = Matrix::from_fn(steps + 1, layers + 1, |_, _| f64::NEG_INFINITY);
    m.data_mut()[0] = 0.0;
    let (la, lb) = ((-lr).ln_1p(), lr.ln());
    let w = layers + 1;
    for t in 0..steps {
        for k in 0..=layers {
            let stay = m.data()[t * w + k] + la;
            let arrive = if k == 0 {
                f64::NEG_INFINITY
            } else {
                m.data()[t * w + k - 1] + lb
            };
            m.data_mut()[(t + 1) * w + k] = log_add(stay, arrive);
        }
    }
    m
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Continuous-time limit `ln[τⁱ e^{−τ} / i!]`.
pub fn poisson_limit(tau: f64, i: u64) -> f64 {
    let a = if i == 0 { 0.0 } else { i as f64 * tau.ln() };
    a - ln_factorial(i) - tau
}

/// Writes `step, layer, log10_magnitude` rows for a table of natural-log
/// magnitudes (`layer` counts down from the output).
pub fn write_log_table_csv<W: Write>(log_table: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "layer", "log10_magnitude"])?;
    for t in 0..log_table.rows() {
        for k in 0..log_table.cols() {
            let v = log_table[(t, k)] / std::f64::consts::LN_10;
            w.write_record([t.to_string(), k.to_string(), format!("{v:e}")])?;
        }
    }
    w.flush().map_err(|e| PcError::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_entries_at_lambda_point_one() {
        let m = DecayModel::new(5, 0.1).unwrap();
        assert!((binomial_magnitude(&m, 2, 1).exp() - 0.18).abs() < 1e-15);
        assert!((binomial_magnitude(&m, 2, 2).exp() - 0.01).abs() < 1e-15);
        assert!((binomial_magnitude(&m, 3, 2).exp() - 0.027).abs() < 1e-15);
        assert!((binomial_magnitude(&m, 3, 0) - 3.0 * 0.9f64.ln()).abs() < 1e-15);
        assert_eq!(binomial_magnitude(&m, 2, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn simulation_initial_row() {
        let t = simulate_simplified_wavefront(4, 0.3, 3);
        assert_eq!(t.row(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn log_simulation_matches_linear() {
        let lin = simulate_simplified_wavefront(6, 0.2, 20);
        let log = simulate_simplified_wavefront_log(6, 0.2, 20);
        for t in 0..=20 {
            for k in 0..=6 {
                let a = lin[(t, k)];
                let b = log[(t, k)].exp();
                assert!((a - b).abs() <= 1e-15 + 1e-12 * a, "{t},{k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn poisson_zero_and_normalization() {
        assert_eq!(poisson_limit(1.7, 0), -1.7);
        let total: f64 = (0..=200).map(|i| poisson_limit(2.0, i).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_lambda() {
        assert!(DecayModel::new(3, 1.0).is_err());
        assert!(DecayModel::new(3, 0.0).is_err());
    }
}
