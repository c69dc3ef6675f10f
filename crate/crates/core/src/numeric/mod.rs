//! Dense linear algebra, deterministic randomness and log-space special
//! functions shared by every other module.

mod linalg;
mod matrix;
mod rng;
mod scalar;
mod special;

pub use linalg::{determinant, orthogonal_init, solve_dense, symmetric_eigenvalues, LuFactors};
pub use matrix::{gemm, Matrix, Vector};
pub use rng::Rng;
pub use scalar::{Precision, Real};
pub use special::{ln_factorial, log_binomial};
