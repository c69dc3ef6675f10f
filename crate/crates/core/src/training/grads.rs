use crate::error::Result;
use crate::model::{loss_and_grad, ErrorConfig, Network, StateConfig};
use crate::numeric::{Matrix, Vector};

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vector,
}

/// Parameter gradients for every layer, output layer last.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrads(pub Vec<LayerGrad>);

impl LayerGrad {
    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight.data().iter().chain(self.bias.iter()).copied()
    }

    pub fn norm(&self) -> f64 {
        self.flat().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &LayerGrad) -> f64 {
        self.flat().zip(other.flat()).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity; `0` if either gradient vanishes.
    pub fn cosine(&self, other: &LayerGrad) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(f64::is_finite)
    }
}

impl WeightGrads {
    pub fn zeros_like(net: &Network) -> Self {
        WeightGrads(
            net.layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: Vector::zeros(l.out_dim()),
                })
                .collect(),
        )
    }

    pub fn num_layers(&self) -> usize {
        self.0.len()
    }

    pub fn layer(&self, i: usize) -> &LayerGrad {
        &self.0[i]
    }

    pub fn norms(&self) -> Vec<f64> {
        self.0.iter().map(LayerGrad::norm).collect()
    }

    pub fn cosines(&self, other: &WeightGrads) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a.cosine(b)).collect()
    }

    pub fn scale(&self, alpha: f64) -> WeightGrads {
        WeightGrads(
            self.0
                .iter()
                .map(|g| LayerGrad {
                    weight: g.weight.scale(alpha),
                    bias: Vector(g.bias.iter().map(|v| v * alpha).collect()),
                })
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(LayerGrad::is_finite)
    }

    /// `max |a − b| / max(max|b|, floor)` for layer `i`.
    pub fn layer_rel_err(&self, other: &WeightGrads, i: usize, floor: f64) -> f64 {
        let (a, b) = (&self.0[i], &other.0[i]);
        let diff = a.flat().zip(b.flat()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        diff / b.max_abs().max(floor)
    }

    /// [`Self::layer_rel_err`] maximized over all layers.
    pub fn max_rel_err(&self, other: &WeightGrads, floor: f64) -> f64 {
        (0..self.0.len())
            .map(|i| self.layer_rel_err(other, i, floor))
            .fold(0.0, f64::max)
    }
}

/// Weight gradients of the batch-mean energy at an error configuration:
/// hidden layer `i` gets `−(∂f_i/∂θ_i)ᵀ e_i` at input `s_{i-1}`, the output
/// layer `(∂f_L/∂θ_L)ᵀ ∇_ŷ𝓛`. States are rebuilt from `e`.
pub fn pc_weight_grads(net: &Network, x: &Matrix, e: &ErrorConfig, y: &Matrix) -> Result<WeightGrads> {
    let s = net.perturbed_forward(x, e)?.0;
    pc_weight_grads_at(net, x, y, &s, e)
}

/// Same rule with the layer Jacobians taken at explicitly supplied states
/// and the errors used only as cotangents. With the states at which the
/// last error update was computed this is the step-consistent form of the
/// weight update (a single step from `e = 0` then gives exactly λ-scaled
/// backprop gradients in the hidden layers).
pub fn pc_weight_grads_at(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    s: &StateConfig,
    e: &ErrorConfig,
) -> Result<WeightGrads> {
    net.check_layers(x, &s.0)?;
    net.check_layers(x, &e.0)?;
    net.check_target(x, y)?;
    let l = net.num_hidden();
    let inv_b = 1.0 / x.rows().max(1) as f64;
    let mut out = Vec::with_capacity(l + 1);
    for i in 0..l {
        let input = if i == 0 { x } else { &s.0[i - 1] };
        let (w, b) = net.layer(i).vjp_params(input, &e.0[i].scale(-inv_b))?;
        out.push(LayerGrad { weight: w, bias: b });
    }
    let y_hat = net.output_layer().forward(&s.0[l - 1])?;
    let (_, g) = loss_and_grad(net.loss(), &y_hat, y)?;
    let (w, b) = net.output_layer().vjp_params(&s.0[l - 1], &g)?;
    out.push(LayerGrad { weight: w, bias: b });
    Ok(WeightGrads(out))
}

/// Exact gradient of the batch-mean loss by a reverse sweep.
pub fn backprop_grads(net: &Network, x: &Matrix, y: &Matrix) -> Result<WeightGrads> {
    net.check_target(x, y)?;
    let fp = net.forward(x)?;
    let (_, mut cot) = loss_and_grad(net.loss(), &fp.y_hat, y)?;
    let n = net.layers().len();
    let mut out: Vec<LayerGrad> = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let input = if i == 0 { x } else { &fp.predictions[i - 1] };
        let v = net.layer(i).vjp(input, &cot)?;
        out.push(LayerGrad {
            weight: v.weight,
            bias: v.bias,
        });
        cot = v.input;
    }
    out.reverse();
    Ok(WeightGrads(out))
}
