use serde::{Deserialize, Serialize};

use crate::error::{PcError, Result};
use crate::numeric::{Matrix, Real};

/// Output loss `𝓛(ŷ, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `½‖ŷ − y‖²` per sample.
    Mse,
    /// Softmax cross-entropy on logits with one-hot targets.
    CrossEntropy,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::CrossEntropy => "cross_entropy",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Loss::Mse => 0,
            Loss::CrossEntropy => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Loss::Mse),
            1 => Some(Loss::CrossEntropy),
            _ => None,
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Loss::Mse),
            "cross_entropy" | "ce" => Ok(Loss::CrossEntropy),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

fn check_one_hot<T: Real>(y: &Matrix<T>) -> Result<()> {
    for r in 0..y.rows() {
        let row = y.row(r);
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(PcError::NotOneHot { row: r });
        }
    }
    Ok(())
}

/// Per-sample loss values and the gradient of each sample's own loss with
/// respect to its prediction (no batch averaging).
pub fn per_sample_loss<T: Real>(
    kind: Loss,
    y_hat: &Matrix<T>,
    y: &Matrix<T>,
) -> Result<(Vec<T>, Matrix<T>)> {
    if y_hat.shape() != y.shape() {
        return Err(PcError::mismatch("loss", y_hat.shape(), y.shape()));
    }
    match kind {
        Loss::Mse => {
            let grad = y_hat.sub(y)?;
            let values = grad
                .row_norms_sq()
                .into_iter()
                .map(|v| T::of(0.5) * v)
                .collect();
            Ok((values, grad))
        }
        Loss::CrossEntropy => {
            check_one_hot(y)?;
            let mut grad = Matrix::zeros(y.rows(), y.cols());
            let mut values = Vec::with_capacity(y.rows());
            for r in 0..y.rows() {
                let logits = y_hat.row(r);
                let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let sum: T = logits.iter().map(|&v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                let target: T = logits.iter().zip(y.row(r)).map(|(&l, &t)| l * t).sum();
                values.push(lse - target);
                for ((g, &l), &t) in grad.row_mut(r).iter_mut().zip(logits).zip(y.row(r)) {
                    *g = (l - lse).exp() - t;
                }
            }
            Ok((values, grad))
        }
    }
}

/// Batch-mean loss and its gradient under the same averaging.
pub fn loss_and_grad<T: Real>(kind: Loss, y_hat: &Matrix<T>, y: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    let (values, grad) = per_sample_loss(kind, y_hat, y)?;
    let n = T::of(values.len().max(1) as f64);
    let mean = values.into_iter().sum::<T>() / n;
    Ok((mean, grad.scale(T::one() / n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_mse_is_zero() {
        let y = Matrix::<f64>::from_rows(&[&[0.3, -1.0], &[2.0, 0.5]]);
        let (v, g) = loss_and_grad(Loss::Mse, &y, &y).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let k = 7;
        let logits = Matrix::<f64>::from_fn(3, k, |_, _| 0.25);
        let y = Matrix::<f64>::from_fn(3, k, |r, c| if c == r { 1.0 } else { 0.0 });
        let (v, _) = loss_and_grad(Loss::CrossEntropy, &logits, &y).unwrap();
        assert!((v - (k as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn non_one_hot_rejected() {
        let y = Matrix::<f64>::from_rows(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let err = loss_and_grad(Loss::CrossEntropy, &y, &y).unwrap_err();
        assert!(matches!(err, PcError::NotOneHot { row: 1 }));
    }

    #[test]
    fn mse_value_is_half_squared_norm_mean() {
        let a = Matrix::<f64>::from_rows(&[&[1.0, 2.0], &[0.0, 0.0]]);
        let b = Matrix::<f64>::zeros(2, 2);
        let (v, g) = loss_and_grad(Loss::Mse, &a, &b).unwrap();
        assert!((v - 1.25).abs() < 1e-15);
        assert_eq!(g.row(0), &[0.5, 1.0]);
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Matrix::<f64>::from_rows(&[&[1000.0, -1000.0, 0.0]]);
        let y = Matrix::<f64>::from_rows(&[&[0.0, 1.0, 0.0]]);
        let (v, g) = loss_and_grad(Loss::CrossEntropy, &logits, &y).unwrap();
        assert!((v - 2000.0).abs() < 1e-9);
        assert!(g.is_finite());
    }
}
