use serde::{Deserialize, Serialize};

use super::{per_sample_loss, Activation, Layer, Loss};
use crate::error::{PcError, Result};
use crate::numeric::{orthogonal_init, Matrix, Real, Rng, Vector};

/// Generative model `f_θ`: hidden layers `0..L` followed by the output layer
/// `L`, plus the output loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f64> {
    layers: Vec<Layer<T>>,
    loss: Loss,
}

/// Architecture of a fully connected network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub dims: Vec<usize>,
    pub activation: Activation,
    /// Activation of the output layer (e.g. sigmoid for MSE classifiers).
    pub output_activation: Activation,
    pub loss: Loss,
    /// Gain of the orthogonal weight initialization.
    pub gain: f64,
}

impl MlpSpec {
    pub fn deep_linear(input: usize, width: usize, hidden: usize, output: usize) -> Self {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, hidden));
        dims.push(output);
        MlpSpec {
            dims,
            activation: Activation::Identity,
            output_activation: Activation::Identity,
            loss: Loss::Mse,
            gain: 1.0,
        }
    }
}

/// Neural states `s_0..s_{L-1}`, one `batch × width` matrix per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StateConfig<T = f64>(pub Vec<Matrix<T>>);

/// Prediction errors `e_0..e_{L-1}`, shaped like [`StateConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorConfig<T = f64>(pub Vec<Matrix<T>>);

/// Result of a plain feedforward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T = f64> {
    /// `ŝ_0..ŝ_{L-1}`.
    pub predictions: Vec<Matrix<T>>,
    pub y_hat: Matrix<T>,
}

/// Batch-mean layer energies and output loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub layer_energies: Vec<f64>,
    pub output_loss: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn new(layer_energies: Vec<f64>, output_loss: f64) -> Self {
        let total = layer_energies.iter().sum::<f64>() + output_loss;
        EnergyReport {
            layer_energies,
            output_loss,
            total,
        }
    }

    pub fn internal_total(&self) -> f64 {
        self.layer_energies.iter().sum()
    }
}

macro_rules! layered_config {
    ($name:ident) => {
        impl<T: Real> $name<T> {
            pub fn zeros_like<U: Real>(net: &Network<U>, batch: usize) -> Self {
                $name(
                    net.hidden_dims()
                        .into_iter()
                        .map(|d| Matrix::zeros(batch, d))
                        .collect(),
                )
            }

            pub fn num_layers(&self) -> usize {
                self.0.len()
            }

            pub fn batch(&self) -> usize {
                self.0.first().map_or(0, |m| m.rows())
            }

            pub fn layer(&self, i: usize) -> &Matrix<T> {
                &self.0[i]
            }

            pub fn max_abs(&self) -> T {
                self.0.iter().fold(T::zero(), |m, l| m.max(l.max_abs()))
            }

            pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
                if self.0.len() != other.0.len() {
                    return None;
                }
                let mut m = T::zero();
                for (a, b) in self.0.iter().zip(&other.0) {
                    m = m.max(a.max_abs_diff(b)?);
                }
                Some(m)
            }

            pub fn cast<U: Real>(&self) -> $name<U> {
                $name(self.0.iter().map(|m| m.cast()).collect())
            }

            /// Keeps only the given batch rows.
            pub fn select_rows(&self, idx: &[usize]) -> Self {
                $name(self.0.iter().map(|m| m.select_rows(idx)).collect())
            }

            /// Flattens one sample into a single vector, layer after layer.
            pub fn sample_vector(&self, row: usize) -> Vec<T> {
                self.0.iter().flat_map(|m| m.row(row).iter().copied()).collect()
            }

            /// Inverse of [`Self::sample_vector`] for a single-sample config.
            pub fn from_sample_vector<U: Real>(net: &Network<U>, v: &[T]) -> Result<Self> {
                let dims = net.hidden_dims();
                let total: usize = dims.iter().sum();
                if v.len() != total {
                    return Err(PcError::mismatch(
                        stringify!($name),
                        (1, v.len()),
                        (1, total),
                    ));
                }
                let mut out = Vec::with_capacity(dims.len());
                let mut off = 0;
                for d in dims {
                    out.push(Matrix::from_vec(1, d, v[off..off + d].to_vec())?);
                    off += d;
                }
                Ok($name(out))
            }
        }
    };
}

layered_config!(StateConfig);
layered_config!(ErrorConfig);

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, loss: Loss) -> Result<Self> {
        if layers.len() < 2 {
            return Err(PcError::InvalidConfig(format!(
                "a network needs at least one hidden layer and an output layer (got {} layers)",
                layers.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(PcError::mismatch(
                    "layer chain",
                    pair[0].weight.shape(),
                    pair[1].weight.shape(),
                ));
            }
        }
        Ok(Network { layers, loss })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer<T> {
        &self.layers[i]
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    /// Number of hidden states `L`.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output_layer(&self) -> &Layer<T> {
        &self.layers[self.layers.len() - 1]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_layer().out_dim()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.num_hidden()]
            .iter()
            .map(|l| l.out_dim())
            .collect()
    }

    pub fn total_hidden_dim(&self) -> usize {
        self.hidden_dims().iter().sum()
    }

    /// True if every layer is affine (identity activation).
    pub fn is_linear(&self) -> bool {
        self.layers.iter().all(|l| l.activation.is_identity())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            loss: self.loss,
        }
    }

    pub(crate) fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(PcError::mismatch(
                "network input",
                x.shape(),
                self.layers[0].weight.shape(),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_target(&self, x: &Matrix<T>, y: &Matrix<T>) -> Result<()> {
        if y.shape() != (x.rows(), self.output_dim()) {
            return Err(PcError::mismatch(
                "network target",
                y.shape(),
                (x.rows(), self.output_dim()),
            ));
        }
        Ok(())
    }

    /// Checks that a layered configuration matches the hidden widths and the
    /// batch size of `x`.
    pub(crate) fn check_layers(&self, x: &Matrix<T>, layers: &[Matrix<T>]) -> Result<()> {
        self.check_input(x)?;
        let dims = self.hidden_dims();
        if layers.len() != dims.len() {
            return Err(PcError::mismatch(
                "layer count",
                (layers.len(), 0),
                (dims.len(), 0),
            ));
        }
        for (m, &d) in layers.iter().zip(&dims) {
            if m.shape() != (x.rows(), d) {
                return Err(PcError::mismatch("layer shape", m.shape(), (x.rows(), d)));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<ForwardPass<T>> {
        self.check_input(x)?;
        let l = self.num_hidden();
        let mut predictions: Vec<Matrix<T>> = Vec::with_capacity(l);
        for i in 0..l {
            let input = if i == 0 { x } else { &predictions[i - 1] };
            let next = self.layers[i].forward(input)?;
            predictions.push(next);
        }
        let y_hat = self.output_layer().forward(&predictions[l - 1])?;
        Ok(ForwardPass { predictions, y_hat })
    }

    /// Feedforward pass with `e_i` added after every hidden layer:
    /// `s_i = f_i(s_{i-1}) + e_i`.
    pub fn perturbed_forward(
        &self,
        x: &Matrix<T>,
        e: &ErrorConfig<T>,
    ) -> Result<(StateConfig<T>, Matrix<T>)> {
        self.check_layers(x, &e.0)?;
        let l = self.num_hidden();
        let mut states: Vec<Matrix<T>> = Vec::with_capacity(l);
        for i in 0..l {
            let input = if i == 0 { x } else { &states[i - 1] };
            let mut s = self.layers[i].forward(input)?;
            s.add_assign(&e.0[i])?;
            states.push(s);
        }
        let y_hat = self.output_layer().forward(&states[l - 1])?;
        Ok((StateConfig(states), y_hat))
    }

    /// Prediction errors `e_i = s_i − f_i(s_{i-1})` of a state configuration.
    pub fn prediction_errors(&self, x: &Matrix<T>, s: &StateConfig<T>) -> Result<ErrorConfig<T>> {
        self.check_layers(x, &s.0)?;
        let mut errors = Vec::with_capacity(s.0.len());
        for i in 0..s.0.len() {
            let input = if i == 0 { x } else { &s.0[i - 1] };
            errors.push(s.0[i].sub(&self.layers[i].forward(input)?)?);
        }
        Ok(ErrorConfig(errors))
    }

    /// Energy of a state configuration: `E_i = ½‖s_i − f_i(s_{i-1})‖²` and
    /// `𝓛(f_L(s_{L-1}), y)`, each averaged over the batch.
    pub fn energy_spc(&self, x: &Matrix<T>, y: &Matrix<T>, s: &StateConfig<T>) -> Result<EnergyReport> {
        self.check_target(x, y)?;
        let errors = self.prediction_errors(x, s)?;
        let y_hat = self.output_layer().forward(&s.0[s.0.len() - 1])?;
        self.report(&errors, &y_hat, y)
    }

    /// Energy of an error configuration: `E_i = ½‖e_i‖²` and the loss of the
    /// perturbed forward pass.
    pub fn energy_epc(&self, x: &Matrix<T>, y: &Matrix<T>, e: &ErrorConfig<T>) -> Result<EnergyReport> {
        self.check_target(x, y)?;
        let (_, y_hat) = self.perturbed_forward(x, e)?;
        self.report(e, &y_hat, y)
    }

    fn report(&self, e: &ErrorConfig<T>, y_hat: &Matrix<T>, y: &Matrix<T>) -> Result<EnergyReport> {
        let (values, _) = per_sample_loss(self.loss, y_hat, y)?;
        Ok(EnergyReport::from_parts(&e.0, &values))
    }
}

impl EnergyReport {
    /// Batch-mean report from per-layer errors and per-sample loss values.
    pub(crate) fn from_parts<T: Real>(errors: &[Matrix<T>], loss_values: &[T]) -> Self {
        let batch = T::of(loss_values.len().max(1) as f64);
        let layer_energies = errors
            .iter()
            .map(|m| (T::of(0.5) * m.frobenius_sq() / batch).as_f64())
            .collect();
        let loss = (loss_values.iter().copied().sum::<T>() / batch).as_f64();
        EnergyReport::new(layer_energies, loss)
    }
}

impl Network<f64> {
    /// Fully connected network with orthogonal weights and zero biases.
    pub fn mlp(spec: &MlpSpec, rng: &mut Rng) -> Result<Self> {
        if spec.dims.len() < 3 {
            return Err(PcError::InvalidConfig(
                "dims must list input, at least one hidden width and output".into(),
            ));
        }
        if spec.dims.contains(&0) {
            return Err(PcError::InvalidConfig("layer widths must be positive".into()));
        }
        let n = spec.dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    spec.output_activation
                } else {
                    spec.activation
                };
                let w = orthogonal_init(spec.dims[i + 1], spec.dims[i], spec.gain, rng);
                Layer::new(w, Vector::zeros(spec.dims[i + 1]), act)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers, spec.loss)
    }

    /// Architecture summary (widths, activations, loss).
    pub fn spec(&self) -> MlpSpec {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim()));
        MlpSpec {
            dims,
            activation: self.layers[0].activation,
            output_activation: self.output_layer().activation,
            loss: self.loss,
            gain: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(dims: &[usize], act: Activation, loss: Loss, seed: u64) -> Network {
        let mut rng = Rng::new(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let weight = Matrix::from_fn(w[1], w[0], |_, _| rng.normal() * 0.6);
                let bias = Vector((0..w[1]).map(|_| rng.normal() * 0.1).collect());
                Layer::new(weight, bias, act).unwrap()
            })
            .collect();
        Network::new(layers, loss).unwrap()
    }

    #[test]
    fn zero_network_predicts_zero() {
        let layers = vec![
            Layer::new(Matrix::<f64>::zeros(3, 2), Vector::zeros(3), Activation::Identity).unwrap(),
            Layer::new(Matrix::<f64>::zeros(2, 3), Vector::zeros(2), Activation::Identity).unwrap(),
        ];
        let net = Network::new(layers, Loss::Mse).unwrap();
        let x = Matrix::from_rows(&[&[1.0, -4.0], &[0.5, 2.0]]);
        let fp = net.forward(&x).unwrap();
        assert_eq!(fp.predictions[0].max_abs(), 0.0);
        assert_eq!(fp.y_hat.max_abs(), 0.0);
    }

    #[test]
    fn identity_network_is_identity() {
        let id = || Layer::new(Matrix::<f64>::identity(3), Vector::zeros(3), Activation::Identity).unwrap();
        let net = Network::new(vec![id(), id()], Loss::Mse).unwrap();
        let x = Matrix::from_rows(&[&[1.0, -4.0, 0.25]]);
        assert_eq!(net.forward(&x).unwrap().y_hat, x);
    }

    #[test]
    fn linear_net_matches_matrix_chain() {
        let net = random_net(&[4, 5, 3, 2], Activation::Identity, Loss::Mse, 3);
        let mut rng = Rng::new(30);
        let x = Matrix::from_fn(6, 4, |_, _| rng.normal());
        let mut h = x.clone();
        for layer in net.layers() {
            h = gemm_chain_step(&h, layer);
        }
        let diff = net.forward(&x).unwrap().y_hat.max_abs_diff(&h).unwrap();
        assert!(diff <= 1e-14, "diff {diff}");
    }

    fn gemm_chain_step(h: &Matrix, layer: &Layer) -> Matrix {
        // (W·hᵀ)ᵀ + b, built from the plain gemm.
        let mut out = crate::numeric::gemm(&layer.weight, &h.transpose()).unwrap().transpose();
        out.add_row_vector(&layer.bias).unwrap();
        out
    }

    #[test]
    fn zero_perturbation_equals_forward_bitwise() {
        let net = random_net(&[3, 4, 4, 2], Activation::Gelu, Loss::CrossEntropy, 4);
        let mut rng = Rng::new(40);
        let x = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let fp = net.forward(&x).unwrap();
        let (s, y_hat) = net
            .perturbed_forward(&x, &ErrorConfig::zeros_like(&net, 5))
            .unwrap();
        assert_eq!(s.0, fp.predictions);
        assert_eq!(y_hat, fp.y_hat);
    }

    #[test]
    fn additive_perturbation_single_layer() {
        let id = || Layer::new(Matrix::<f64>::identity(2), Vector::zeros(2), Activation::Identity).unwrap();
        let net = Network::new(vec![id(), id()], Loss::Mse).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0]]);
        let v = Matrix::from_rows(&[&[0.5, -0.25]]);
        let (s, _) = net.perturbed_forward(&x, &ErrorConfig(vec![v])).unwrap();
        assert_eq!(s.0[0], Matrix::from_rows(&[&[1.5, 1.75]]));
    }

    #[test]
    fn perturbed_forward_matches_recursion() {
        let net = random_net(&[3, 4, 5, 2], Activation::Tanh, Loss::Mse, 5);
        let mut rng = Rng::new(50);
        let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let e = ErrorConfig(
            net.hidden_dims()
                .iter()
                .map(|&d| Matrix::from_fn(4, d, |_, _| rng.normal()))
                .collect(),
        );
        let (s, y_hat) = net.perturbed_forward(&x, &e).unwrap();
        // Hand-rolled per-sample recursion.
        for b in 0..4 {
            let mut h: Vec<f64> = x.row(b).to_vec();
            for i in 0..net.num_hidden() {
                let layer = net.layer(i);
                h = (0..layer.out_dim())
                    .map(|r| {
                        let z: f64 = layer.weight.row(r).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
                            + layer.bias[r];
                        z.tanh() + e.0[i][(b, r)]
                    })
                    .collect();
                for (r, v) in h.iter().enumerate() {
                    assert!((s.0[i][(b, r)] - v).abs() <= 1e-14);
                }
            }
            let out = net.output_layer();
            for r in 0..out.out_dim() {
                let z: f64 = out.weight.row(r).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + out.bias[r];
                assert!((y_hat[(b, r)] - z.tanh()).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn energy_at_feedforward_is_loss_only() {
        let net = random_net(&[3, 4, 4, 3], Activation::Relu, Loss::Mse, 6);
        let mut rng = Rng::new(60);
        let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let y = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let fp = net.forward(&x).unwrap();
        let rep = net.energy_spc(&x, &y, &StateConfig(fp.predictions.clone())).unwrap();
        assert!(rep.layer_energies.iter().all(|&v| v == 0.0));
        let (loss, _) = super::super::loss_and_grad(Loss::Mse, &fp.y_hat, &y).unwrap();
        assert_eq!(rep.output_loss, loss);
        assert_eq!(rep.total, rep.layer_energies.iter().sum::<f64>() + rep.output_loss);
    }

    #[test]
    fn single_layer_energy_is_half_norm() {
        let id = || Layer::new(Matrix::<f64>::identity(2), Vector::zeros(2), Activation::Identity).unwrap();
        let net = Network::new(vec![id(), id()], Loss::Mse).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0]]);
        let y = x.clone();
        let v = [0.3, -0.4];
        let s = StateConfig(vec![Matrix::from_rows(&[&[1.0 + v[0], 2.0 + v[1]]])]);
        let rep = net.energy_spc(&x, &y, &s).unwrap();
        assert!((rep.layer_energies[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_naive_summation() {
        let net = random_net(&[3, 5, 4, 2], Activation::Sigmoid, Loss::Mse, 7);
        let mut rng = Rng::new(70);
        let x = Matrix::from_fn(3, 3, |_, _| rng.normal());
        let y = Matrix::from_fn(3, 2, |_, _| rng.normal());
        let s = StateConfig(
            net.hidden_dims()
                .iter()
                .map(|&d| Matrix::from_fn(3, d, |_, _| rng.normal()))
                .collect(),
        );
        let rep = net.energy_spc(&x, &y, &s).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut naive = vec![0.0; net.num_hidden()];
        let mut loss = 0.0;
        for b in 0..3 {
            for i in 0..=net.num_hidden() {
                let layer = net.layer(i);
                let input: Vec<f64> = if i == 0 { x.row(b).to_vec() } else { s.0[i - 1].row(b).to_vec() };
                for r in 0..layer.out_dim() {
                    let z: f64 = layer.weight.row(r).iter().zip(&input).map(|(w, v)| w * v).sum::<f64>()
                        + layer.bias[r];
                    if i < net.num_hidden() {
                        naive[i] += 0.5 * (s.0[i][(b, r)] - sig(z)).powi(2) / 3.0;
                    } else {
                        loss += 0.5 * (sig(z) - y[(b, r)]).powi(2) / 3.0;
                    }
                }
            }
        }
        for (a, b) in rep.layer_energies.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((rep.output_loss - loss).abs() <= 1e-12);
    }

    #[test]
    fn rejects_broken_chain() {
        let a = Layer::new(Matrix::<f64>::zeros(3, 2), Vector::zeros(3), Activation::Identity).unwrap();
        let b = Layer::new(Matrix::<f64>::zeros(2, 4), Vector::zeros(2), Activation::Identity).unwrap();
        assert!(Network::new(vec![a, b], Loss::Mse).is_err());
    }
}
