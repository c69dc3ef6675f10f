//! Log-space factorials and binomial coefficients.

use std::f64::consts::PI;

use crate::error::{PcError, Result};

/// Below this argument factorials are summed directly from logs.
const DIRECT_LIMIT: u64 = 30;

/// Remainder of the Stirling series, `ln n! − [n ln n − n + ½ ln(2πn)]`,
/// for `n > DIRECT_LIMIT`. The truncation error is below `n⁻¹¹`.
fn stirling_tail(n: f64) -> f64 {
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        - inv2
            * (1.0 / 360.0
                - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))))
}

/// Natural log of `n!`.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= DIRECT_LIMIT {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + stirling_tail(x)
}

/// `ln C(t, i)`, accurate to a few ulps relative for `t` up to at least 10⁶.
///
/// Small `min(i, t−i)` sums the positive terms `ln((t−k+j)/j)`; larger values
/// use the Stirling expansion with the leading terms grouped so that nothing
/// cancels (`k ln(t/k) + (t−k) ln1p(k/(t−k))`).
pub fn log_binomial(t: u64, i: u64) -> Result<f64> {
    if i > t {
        return Err(PcError::Domain(format!(
            "log_binomial requires i <= t (got t={t}, i={i})"
        )));
    }
    let k = i.min(t - i);
    if k == 0 {
        return Ok(0.0);
    }
    if k <= DIRECT_LIMIT {
        let base = (t - k) as f64;
        return Ok((1..=k).map(|j| ((base + j as f64) / j as f64).ln()).sum());
    }
    let (tf, kf) = (t as f64, k as f64);
    let rest = tf - kf;
    let lead = kf * (tf / kf).ln() + rest * (kf / rest).ln_1p();
    let gauss = 0.5 * (tf / (2.0 * PI * kf * rest)).ln();
    Ok(lead + gauss + stirling_tail(tf) - stirling_tail(kf) - stirling_tail(rest))
}
