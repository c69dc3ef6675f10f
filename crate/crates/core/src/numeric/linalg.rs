//! Direct solves, determinants, orthogonal initialization and symmetric
//! eigenvalues.
//!
//! LU with partial pivoting is hand-written on top of [`Matrix`]; QR and the
//! symmetric eigensolver delegate to `nalgebra`.

use nalgebra::DMatrix;

use super::{Matrix, Rng, Vector};
use crate::error::{PcError, Result};

/// LU factorization `P·A = L·U` with partial pivoting, stored compactly.
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl LuFactors {
    /// Factors a square matrix. Fails when a pivot falls below
    /// `n · ε · max|A|`.
    pub fn new(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(PcError::mismatch("lu", a.shape(), a.shape()));
        }
        let n = a.rows();
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.max_abs();
        let tol = (n.max(1) as f64) * f64::EPSILON * scale;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tol || pmax == 0.0 {
                return Err(PcError::Singular {
                    pivot: pmax,
                    column: k,
                });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, perm, sign })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(PcError::mismatch("lu_solve", (n, n), (b.len(), 1)));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        Ok(x)
    }

    /// Solves `A·X = B` for every column of `B`.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.n {
            return Err(PcError::mismatch("lu_solve", (self.n, self.n), b.shape()));
        }
        let bt = b.transpose();
        let mut out = Matrix::zeros(bt.rows(), self.n);
        for c in 0..bt.rows() {
            let x = self.solve(bt.row(c))?;
            out.row_mut(c).copy_from_slice(&x);
        }
        Ok(out.transpose())
    }

    pub fn determinant(&self) -> f64 {
        (0..self.n).fold(self.sign, |d, k| d * self.lu[k * self.n + k])
    }
}

/// Solves the square system `a·x = b` by LU with partial pivoting.
pub fn solve_dense(a: &Matrix, b: &Vector) -> Result<Vector> {
    if a.rows() != a.cols() || b.len() != a.rows() {
        return Err(PcError::mismatch("solve_dense", a.shape(), (b.len(), 1)));
    }
    Ok(Vector(LuFactors::new(a)?.solve(b)?))
}

pub fn determinant(a: &Matrix) -> Result<f64> {
    match LuFactors::new(a) {
        Ok(lu) => Ok(lu.determinant()),
        Err(PcError::Singular { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Orthogonal (semi-orthogonal when rectangular) matrix scaled by `gain`.
///
/// A Gaussian `max(rows, cols) × min(rows, cols)` draw is QR-factored and the
/// columns of Q are sign-flipped so that R has a positive diagonal; the result
/// is transposed when `rows < cols`. Rows (or columns, whichever are fewer)
/// are orthonormal up to `gain`.
pub fn orthogonal_init(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs positive dims");
    let tall = rows.max(cols);
    let short = rows.min(cols);
    let draw: Vec<f64> = (0..tall * short).map(|_| rng.normal()).collect();
    let g = DMatrix::from_row_slice(tall, short, &draw);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..short {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    let q = q * gain;
    if rows >= cols {
        Matrix::from_fn(rows, cols, |i, j| q[(i, j)])
    } else {
        Matrix::from_fn(rows, cols, |i, j| q[(j, i)])
    }
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(PcError::mismatch("symmetric_eigenvalues", a.shape(), a.shape()));
    }
    let n = a.rows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}
