use super::Activation;
use crate::error::{PcError, Result};
use crate::numeric::{Matrix, Real, Vector};

/// Affine map followed by an elementwise activation: `act(W·x + b)`.
///
/// Batches are row-major `batch × features`; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f64> {
    pub weight: Matrix<T>,
    pub bias: Vector<T>,
    pub activation: Activation,
}

/// Reverse-mode products of a layer for one batch. Weight and bias cotangents
/// are summed over the batch.
#[derive(Debug, Clone)]
pub struct LayerVjp<T = f64> {
    pub input: Matrix<T>,
    pub weight: Matrix<T>,
    pub bias: Vector<T>,
}

impl<T: Real> Layer<T> {
    pub fn new(weight: Matrix<T>, bias: Vector<T>, activation: Activation) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(PcError::mismatch(
                "Layer::new",
                weight.shape(),
                (bias.len(), 1),
            ));
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    /// Pre-activation `x·Wᵀ + b`.
    pub fn pre_activation(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        if input.cols() != self.in_dim() {
            return Err(PcError::mismatch(
                "layer forward",
                input.shape(),
                self.weight.shape(),
            ));
        }
        let mut z = input.matmul_transb(&self.weight)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let z = self.pre_activation(input)?;
        let act = self.activation;
        Ok(if act.is_identity() { z } else { z.map(|v| act.apply(v)) })
    }

    /// Exact vector-Jacobian products through the activation, then the affine
    /// map.
    pub fn vjp(&self, input: &Matrix<T>, cotangent: &Matrix<T>) -> Result<LayerVjp<T>> {
        let z = self.pre_activation(input)?;
        if cotangent.shape() != z.shape() {
            return Err(PcError::mismatch("layer vjp", cotangent.shape(), z.shape()));
        }
        let delta = self.delta(&z, cotangent);
        Ok(LayerVjp {
            input: delta.matmul(&self.weight)?,
            weight: delta.matmul_transa(input)?,
            bias: Vector(delta.column_sums()),
        })
    }

    /// Only the input cotangent, skipping the parameter products.
    pub fn vjp_input(&self, input: &Matrix<T>, cotangent: &Matrix<T>) -> Result<Matrix<T>> {
        let z = self.pre_activation(input)?;
        if cotangent.shape() != z.shape() {
            return Err(PcError::mismatch("layer vjp", cotangent.shape(), z.shape()));
        }
        self.delta(&z, cotangent).matmul(&self.weight)
    }

    /// Only the parameter cotangents.
    pub fn vjp_params(
        &self,
        input: &Matrix<T>,
        cotangent: &Matrix<T>,
    ) -> Result<(Matrix<T>, Vector<T>)> {
        let z = self.pre_activation(input)?;
        if cotangent.shape() != z.shape() {
            return Err(PcError::mismatch("layer vjp", cotangent.shape(), z.shape()));
        }
        let delta = self.delta(&z, cotangent);
        Ok((delta.matmul_transa(input)?, Vector(delta.column_sums())))
    }

    fn delta(&self, z: &Matrix<T>, cotangent: &Matrix<T>) -> Matrix<T> {
        let act = self.activation;
        if act.is_identity() {
            cotangent.clone()
        } else {
            cotangent.zip_map(z, |g, zv| g * act.derivative(zv))
        }
    }

    /// Input Jacobian `diag(act'(z))·W` for a single sample.
    pub fn input_jacobian(&self, input: &[T]) -> Result<Matrix<T>> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let z = self.pre_activation(&x)?;
        let act = self.activation;
        Ok(Matrix::from_fn(self.out_dim(), self.in_dim(), |r, c| {
            act.derivative(z[(0, r)]) * self.weight[(r, c)]
        }))
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        Layer {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            activation: self.activation,
        }
    }
}
