#![allow(dead_code)]

use pc_engine::epc::{error_grad, states_to_errors};
use pc_engine::model::{per_sample_loss, Activation, ErrorConfig, Loss, Network, StateConfig};
use pc_engine::numeric::{Matrix, Rng};
use pc_engine::spc::state_grad;
use pc_engine::training::{backprop_grads, pc_weight_grads_at, WeightGrads};
use pc_engine::verify::{random_batch, random_network, random_states};

/// Five-point central difference step. Small enough that a kink of a
/// piecewise-linear activation is rarely straddled.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
pub const FD_CASES: u32 = 200;

/// Five-point stencil gradient of `f` at `p`.
pub fn fd_gradient(p: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|k| {
            let mut at = |d: f64| {
                q[k] = p[k] + d;
                let v = f(&q);
                q[k] = p[k];
                v
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

/// `max |a − b| / max(max |a|, 1e-8)`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    diff / scale.max(1e-8)
}

pub fn flatten(ms: &[Matrix]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.data().iter().copied()).collect()
}

pub fn unflatten(like: &[Matrix], v: &[f64]) -> Vec<Matrix> {
    let mut off = 0;
    like.iter()
        .map(|m| {
            let n = m.data().len();
            let out = Matrix::from_vec(m.rows(), m.cols(), v[off..off + n].to_vec()).unwrap();
            off += n;
            out
        })
        .collect()
}

pub fn params(net: &Network) -> Vec<f64> {
    net.layers()
        .iter()
        .flat_map(|l| l.weight.data().iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

pub fn with_params(net: &Network, p: &[f64]) -> Network {
    let mut out = net.clone();
    let mut it = p.iter();
    for l in out.layers_mut() {
        for w in l.weight.data_mut().iter_mut().chain(l.bias.iter_mut()) {
            *w = *it.next().unwrap();
        }
    }
    out
}

pub fn grads_flat(g: &WeightGrads) -> Vec<f64> {
    g.0.iter()
        .flat_map(|l| l.weight.data().iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

pub struct Case {
    pub net: Network,
    pub x: Matrix,
    pub y: Matrix,
    pub s: StateConfig,
}

pub fn case(seed: u64, layers: usize, act: Activation, loss: Loss, batch: usize) -> Case {
    let mut rng = Rng::new(seed);
    let net = random_network(&mut rng, layers, 6, act, loss).unwrap();
    let (x, y) = random_batch(&mut rng, &net, batch);
    let s = random_states(&mut rng, &net, batch);
    Case { net, x, y, s }
}

/// Every finite-difference oracle on one random case, as `(name, rel err)`.
pub fn fd_checks(c: &Case, seed: u64) -> Vec<(&'static str, f64)> {
    let Case { net, x, y, s } = c;
    let b = x.rows() as f64;
    let mut rng = Rng::new(seed ^ 0x5eed);
    let mut out = Vec::new();

    // Output loss against its prediction, one sample's own loss at a time.
    let y_hat = Matrix::from_fn(y.rows(), y.cols(), |_, _| rng.normal());
    let (_, g) = per_sample_loss(net.loss(), &y_hat, y).unwrap();
    let fd = fd_gradient(y_hat.data(), FD_STEP, |v| {
        let m = Matrix::from_vec(y.rows(), y.cols(), v.to_vec()).unwrap();
        per_sample_loss(net.loss(), &m, y).unwrap().0.iter().sum()
    });
    out.push(("loss_grad", rel_err(g.data(), &fd)));

    // Layer VJPs: the gradient of ⟨c, f(input)⟩.
    let li = rng.below(net.layers().len());
    let layer = net.layer(li);
    let input = Matrix::from_fn(x.rows(), layer.in_dim(), |_, _| rng.normal());
    let cot = Matrix::from_fn(x.rows(), layer.out_dim(), |_, _| rng.normal());
    let dot = |a: &Matrix, b: &Matrix| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>();
    let vjp = layer.vjp(&input, &cot).unwrap();
    let fd = fd_gradient(input.data(), FD_STEP, |v| {
        let m = Matrix::from_vec(input.rows(), input.cols(), v.to_vec()).unwrap();
        dot(&layer.forward(&m).unwrap(), &cot)
    });
    out.push(("vjp_input", rel_err(vjp.input.data(), &fd)));
    let lp: Vec<f64> = layer.weight.data().iter().chain(layer.bias.iter()).copied().collect();
    let fd = fd_gradient(&lp, FD_STEP, |v| {
        let mut l = layer.clone();
        let nw = l.weight.data().len();
        l.weight.data_mut().copy_from_slice(&v[..nw]);
        l.bias.0.copy_from_slice(&v[nw..]);
        dot(&l.forward(&input).unwrap(), &cot)
    });
    let an: Vec<f64> = vjp.weight.data().iter().chain(vjp.bias.iter()).copied().collect();
    out.push(("vjp_params", rel_err(&an, &fd)));

    // State gradients: per-sample energies summed over the batch.
    let gs = state_grad(net, x, y, s).unwrap();
    let fd = fd_gradient(&flatten(&s.0), FD_STEP, |v| {
        b * net.energy_spc(x, y, &StateConfig(unflatten(&s.0, v))).unwrap().total
    });
    out.push(("state_grad", rel_err(&flatten(&gs), &fd)));

    // Error gradients through the perturbed forward pass.
    let e = states_to_errors(net, x, s).unwrap();
    let ge = error_grad(net, x, y, &e).unwrap();
    let fd = fd_gradient(&flatten(&e.0), FD_STEP, |v| {
        b * net.energy_epc(x, y, &ErrorConfig(unflatten(&e.0, v))).unwrap().total
    });
    out.push(("error_grad", rel_err(&flatten(&ge), &fd)));

    // Backprop: batch-mean loss of the feedforward output.
    let p0 = params(net);
    let bp = backprop_grads(net, x, y).unwrap();
    let fd = fd_gradient(&p0, FD_STEP, |v| {
        let n = with_params(net, v);
        let fp = n.forward(x).unwrap();
        let vals = per_sample_loss(n.loss(), &fp.y_hat, y).unwrap().0;
        vals.iter().sum::<f64>() / b
    });
    out.push(("backprop", rel_err(&grads_flat(&bp), &fd)));

    // Local weight rule: batch-mean energy at fixed states.
    let pc = pc_weight_grads_at(net, x, y, s, &e).unwrap();
    let fd = fd_gradient(&p0, FD_STEP, |v| with_params(net, v).energy_spc(x, y, s).unwrap().total);
    out.push(("pc_weight_grads", rel_err(&grads_flat(&pc), &fd)));
    out
}
