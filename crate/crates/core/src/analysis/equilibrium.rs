use crate::error::{PcError, Result};
use crate::model::{Loss, Network, StateConfig};
use crate::numeric::{LuFactors, Matrix};

/// Stationarity system of a linear network with MSE loss:
/// `A_i s_{i-1} + D_i s_i + U_i s_{i+1} = c_i`, one right-hand side column
/// per sample.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalSystem {
    /// `D_i = I + W_{i+1}ᵀ W_{i+1}`.
    pub diag: Vec<Matrix>,
    /// `A_i = −W_i` for `i ≥ 1` (entry 0 is unused and empty).
    pub sub: Vec<Matrix>,
    /// `U_i = −W_{i+1}ᵀ` for `i ≤ L−2`.
    pub sup: Vec<Matrix>,
    /// `c_i`, `width_i × batch`.
    pub rhs: Vec<Matrix>,
}

impl BlockTridiagonalSystem {
    pub fn from_network(net: &Network, x: &Matrix, y: &Matrix) -> Result<Self> {
        if !net.is_linear() || net.loss() != Loss::Mse {
            return Err(PcError::Contract(
                "the analytic equilibrium needs identity activations and MSE loss".into(),
            ));
        }
        net.check_target(x, y)?;
        let l = net.num_hidden();
        let w = |i: usize| &net.layer(i).weight;
        let b = |i: usize| &net.layer(i).bias;
        let batch = x.rows();
        let mut diag = Vec::with_capacity(l);
        let mut sub = Vec::with_capacity(l);
        let mut sup = Vec::with_capacity(l);
        let mut rhs = Vec::with_capacity(l);
        for i in 0..l {
            let wn = w(i + 1);
            let mut d = wn.matmul_transa(wn)?;
            let n = d.cols();
            for k in 0..n {
                d.data_mut()[k * n + k] += 1.0;
            }
            diag.push(d);
            sub.push(if i == 0 { Matrix::zeros(0, 0) } else { w(i).scale(-1.0) });
            if i + 1 < l {
                sup.push(wn.transpose().scale(-1.0));
            }
            // b_i − W_{i+1}ᵀ b_{i+1}, broadcast over samples.
            let wtb = wn.transpose().matvec(b(i + 1))?;
            let mut c = Matrix::from_fn(wn.cols(), batch, |r, _| b(i)[r] - wtb[r]);
            if i == 0 {
                c.add_assign(&w(0).matmul_transb(x)?)?;
            }
            if i + 1 == l {
                c.add_assign(&wn.transpose().matmul_transb(y)?)?;
            }
            rhs.push(c);
        }
        Ok(BlockTridiagonalSystem { diag, sub, sup, rhs })
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    /// Block forward elimination and back substitution without pivoting.
    pub fn solve_block(&self) -> Result<Vec<Matrix>> {
        let l = self.num_blocks();
        let mut factors: Vec<LuFactors> = Vec::with_capacity(l);
        let mut c_prime: Vec<Matrix> = Vec::with_capacity(l);
        for i in 0..l {
            let (d, c) = if i == 0 {
                (self.diag[0].clone(), self.rhs[0].clone())
            } else {
                // D'_i = D_i − A_i D'_{i-1}⁻¹ U_{i-1},  c'_i = c_i − A_i D'_{i-1}⁻¹ c'_{i-1}
                let prev = &factors[i - 1];
                let du = prev.solve_matrix(&self.sup[i - 1])?;
                let dc = prev.solve_matrix(&c_prime[i - 1])?;
                let a = &self.sub[i];
                (self.diag[i].sub(&a.matmul(&du)?)?, self.rhs[i].sub(&a.matmul(&dc)?)?)
            };
            factors.push(LuFactors::new(&d)?);
            c_prime.push(c);
        }
        let mut s: Vec<Matrix> = vec![Matrix::zeros(0, 0); l];
        for i in (0..l).rev() {
            let rhs = if i + 1 == l {
                c_prime[i].clone()
            } else {
                c_prime[i].sub(&self.sup[i].matmul(&s[i + 1])?)?
            };
            s[i] = factors[i].solve_matrix(&rhs)?;
        }
        Ok(s)
    }

    /// Full `N × N` matrix of the system (`N` = total hidden width).
    pub fn assemble_dense(&self) -> Matrix {
        let dims: Vec<usize> = self.diag.iter().map(|d| d.rows()).collect();
        let offs: Vec<usize> = dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let n: usize = dims.iter().sum();
        let mut m = Matrix::zeros(n, n);
        let mut put = |blk: &Matrix, r0: usize, c0: usize| {
            for r in 0..blk.rows() {
                for c in 0..blk.cols() {
                    m.data_mut()[(r0 + r) * n + c0 + c] = blk[(r, c)];
                }
            }
        };
        for i in 0..dims.len() {
            put(&self.diag[i], offs[i], offs[i]);
            if i > 0 {
                put(&self.sub[i], offs[i], offs[i - 1]);
            }
            if i + 1 < dims.len() {
                put(&self.sup[i], offs[i], offs[i + 1]);
            }
        }
        m
    }

    /// Dense LU solve of the assembled system.
    pub fn solve_dense(&self) -> Result<Vec<Matrix>> {
        let a = self.assemble_dense();
        let lu = LuFactors::new(&a)?;
        let n = a.rows();
        let batch = self.rhs[0].cols();
        let stacked = Matrix::from_fn(n, batch, |r, c| {
            let mut r = r;
            for blk in &self.rhs {
                if r < blk.rows() {
                    return blk[(r, c)];
                }
                r -= blk.rows();
            }
            unreachable!()
        });
        let sol = lu.solve_matrix(&stacked)?;
        let mut out = Vec::with_capacity(self.rhs.len());
        let mut off = 0;
        for blk in &self.rhs {
            out.push(Matrix::from_fn(blk.rows(), batch, |r, c| sol[(off + r, c)]));
            off += blk.rows();
        }
        Ok(out)
    }
}

fn to_states(cols: Vec<Matrix>) -> StateConfig {
    StateConfig(cols.into_iter().map(|m| m.transpose()).collect())
}

/// Exact minimizer of the energy of a linear MSE network, one per sample.
/// Falls back to a dense solve if block elimination hits a singular pivot.
pub fn analytic_equilibrium_linear(net: &Network, x: &Matrix, y: &Matrix) -> Result<StateConfig> {
    let sys = BlockTridiagonalSystem::from_network(net, x, y)?;
    match sys.solve_block() {
        Ok(s) => Ok(to_states(s)),
        Err(PcError::Singular { .. }) => {
            log::warn!("block elimination hit a singular pivot; using dense LU");
            Ok(to_states(sys.solve_dense()?))
        }
        Err(e) => Err(e),
    }
}

/// Same solution via the dense assembled system.
pub fn analytic_equilibrium_dense(net: &Network, x: &Matrix, y: &Matrix) -> Result<StateConfig> {
    Ok(to_states(BlockTridiagonalSystem::from_network(net, x, y)?.solve_dense()?))
}
