//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and exits nonzero if any failed.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{case, fd_checks, FD_CASES, FD_TOL};
use pc_engine::analysis::{
    analytic_equilibrium_linear, binomial_magnitude, poisson_limit, simulate_simplified_wavefront, DecayModel,
};
use pc_engine::cli::{cmd_decay, cmd_relax, cmd_train, ExperimentConfig};
use pc_engine::model::{per_sample_loss, Activation, Layer, Loss, MlpSpec, Network};
use pc_engine::numeric::{Matrix, Rng, Vector};
use pc_engine::spc::{init_states_feedforward, spc_eval};
use pc_engine::training::{backprop_grads, gradient_trajectory, pc_weight_grads_at};
use pc_engine::verify::{random_batch, random_network, run_verify, single_step_reduction_error, VerifyConfig};
use pc_engine::Algo;
use serde_json::Value;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn ok_if(cond: bool, msg: String) -> Check {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Loads a shipped config with its output redirected to `out` and data paths
/// made absolute.
fn load_config(name: &str, out: &Path) -> ExperimentConfig {
    let root = workspace();
    let mut overrides = vec![("out".to_string(), serde_json::to_string(&out).unwrap())];
    if name.starts_with("train") {
        for (k, f) in [
            ("train_images", "train-images-idx3-ubyte.gz"),
            ("train_labels", "train-labels-idx1-ubyte.gz"),
            ("test_images", "t2k-images-idx3-ubyte.gz"),
            ("test_labels", "t2k-labels-idx1-ubyte.gz"),
        ] {
            let p = root.join("data/mnist").join(f);
            overrides.push((format!("data.{k}"), serde_json::to_string(&p).unwrap()));
        }
    }
    ExperimentConfig::load(Some(&root.join("configs").join(name)), &overrides).unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn c1_backprop_reduction() -> Check {
    let mut rng = Rng::new(2024);
    let mut worst = 0.0f64;
    let mut worst_traj = 0.0f64;
    for n in 0..50 {
        let act = Activation::ALL[n % Activation::ALL.len()];
        let loss = if (n / Activation::ALL.len()).is_multiple_of(2) { Loss::Mse } else { Loss::CrossEntropy };
        let layers = 2 + rng.below(5);
        let net = random_network(&mut rng, layers, 8, act, loss).map_err(|e| e.to_string())?;
        let batch = 1 + rng.below(4);
        let (x, y) = random_batch(&mut rng, &net, batch);
        let lr = rng.uniform_range(1e-3, 0.5);
        worst = worst.max(single_step_reduction_error(&net, &x, &y, lr).map_err(|e| e.to_string())?);

        // Same quantity through the trajectory code path.
        let tr = gradient_trajectory(&net, &x, &y, Algo::Epc, 1, lr).map_err(|e| e.to_string())?;
        let bp = backprop_grads(&net, &x, &y).map_err(|e| e.to_string())?;
        let mut expect = bp.scale(lr);
        let l = net.num_hidden();
        expect.0[l] = bp.0[l].clone();
        worst_traj = worst_traj.max(tr.first_step_grads.max_rel_err(&expect, 1e-300));
    }
    let r = worst.max(worst_traj);
    ok_if(r <= 1e-10, format!("50 nets, max rel err {r:.2e} (tol 1e-10)"))
}

fn c2_equivalence_suite() -> Check {
    let rep = run_verify(&VerifyConfig::default()).map_err(|e| e.to_string())?;
    let parts: Vec<String> = rep
        .checks
        .iter()
        .map(|c| format!("{}={:.1e}{}", c.name, c.residual, if c.passed { "" } else { "!" }))
        .collect();
    let names = ["bijection_roundtrip", "energy_equality", "gradient_relation", "jacobian_determinant", "hessian_inertia"];
    let all_present = names.iter().all(|n| rep.checks.iter().any(|c| c.name == *n));
    ok_if(rep.passed && all_present, parts.join(" "))
}

fn c3_deep_linear_convergence() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config("relax_deep_linear.json", dir.path());
    let layers = cfg.network.as_ref().unwrap().dims.len() - 1;
    cmd_relax(&cfg).map_err(|e| e.to_string())?;
    let r = report(dir.path());
    let dist = |a: &str| r["results"][a]["final_median_distance"].as_f64().unwrap_or(f64::INFINITY);
    let (ds, de) = (dist("spc"), dist("epc"));
    let it = |a: &str| r["results"][a]["iterations_to_tol"].as_u64();
    let ratio = r["iterations_ratio_spc_over_epc"].as_f64().unwrap_or(0.0);
    ok_if(
        ds <= 1e-6 && de <= 1e-6 && ratio >= 20.0,
        format!(
            "{layers} layers: median distance spc {ds:.2e} epc {de:.2e}; iterations to 1e-4 spc {:?} epc {:?}, ratio {ratio:.0} (need >= 20)",
            it("spc"),
            it("epc")
        ),
    )
}

fn c4_wavefront() -> Check {
    let (width, layers, batch, lr) = (8, 12, 4, 0.3);
    let id = || Layer::new(Matrix::identity(width), Vector::zeros(width), Activation::Identity).unwrap();
    let net = Network::new((0..layers).map(|_| id()).collect(), Loss::Mse).unwrap();
    let mut rng = Rng::new(7);
    let x = Matrix::zeros(batch, width);
    let y = Matrix::from_fn(batch, width, |_, _| rng.normal());
    let y_hat = net.forward(&x).unwrap().y_hat;
    let g_loss = per_sample_loss(Loss::Mse, &y_hat, &y).unwrap().1.frobenius_sq().sqrt();

    let h = net.num_hidden();
    let mut s = init_states_feedforward(&net, &x).unwrap().0;
    let mut arrived: Vec<Option<(usize, f64, f64)>> = vec![None; h];
    for t in 0..=h {
        let g = spc_eval(&net, &x, &y, &s).unwrap().grads;
        let before = s.clone();
        for (v, gi) in s.iter_mut().zip(&g) {
            v.axpy(-lr, gi).unwrap();
        }
        for (i, gi) in g.iter().enumerate() {
            let n = gi.frobenius_sq().sqrt();
            if arrived[i].is_none() && n > 0.0 {
                let moved = s[i].zip_map(&before[i], |a, b| a - b).frobenius_sq().sqrt();
                arrived[i] = Some((t, n, moved));
            }
        }
    }
    let mut worst = 0.0f64;
    for k in 0..h {
        let Some((t, g, ds)) = arrived[h - 1 - k] else {
            return Err(format!("layer {} never moved", h - 1 - k));
        };
        if t != k {
            return Err(format!("layer {} first moved at step {t}, expected {k}", h - 1 - k));
        }
        let expect = lr.powi(k as i32) * g_loss;
        worst = worst.max((g - expect).abs() / expect);
        worst = worst.max((ds - lr * expect).abs() / (lr * expect));
    }
    ok_if(worst <= 1e-9, format!("{layers} layers, lr {lr}: max rel err {worst:.2e} (tol 1e-9)"))
}

fn c5_binomial() -> Check {
    let (layers, lr, steps) = (64, 0.1, 50);
    let model = DecayModel::new(layers, lr).unwrap();
    let sim = simulate_simplified_wavefront(layers, lr, steps);
    let mut sim_err = 0.0f64;
    for t in 0..=steps {
        for i in 0..=t {
            let f = binomial_magnitude(&model, t as u64, i as u64).exp();
            sim_err = sim_err.max((f - sim[(t, i)]).abs());
        }
    }
    let table = [(2, 1, 0.18), (2, 2, 0.01), (3, 2, 0.027)];
    let mut table_err = 0.0f64;
    for (t, i, v) in table {
        table_err = table_err.max((binomial_magnitude(&model, t, i).exp() - v).abs());
    }
    let pm = DecayModel::new(8, 1e-4).unwrap();
    let mut poisson = 0.0f64;
    for tau in [0.5, 1.0, 2.0] {
        let t = (tau / 1e-4f64).round() as u64;
        for i in 0..=8 {
            let b = binomial_magnitude(&pm, t, i).exp();
            let p = poisson_limit(tau, i).exp();
            poisson = poisson.max((b - p).abs() / p);
        }
    }
    ok_if(
        sim_err <= 1e-12 && table_err <= 1e-12 && poisson <= 0.01,
        format!("simulation {sim_err:.1e}, table {table_err:.1e} (tol 1e-12); poisson rel {poisson:.2e} (tol 1e-2)"),
    )
}

fn c6_precision() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config("decay_mlp.json", dir.path());
    cmd_decay(&cfg).map_err(|e| e.to_string())?;
    let r = report(dir.path());
    let arr = |k: &str| -> Vec<Option<u64>> {
        r["arrivals"][k].as_array().unwrap().iter().map(Value::as_u64).collect()
    };
    let (s32, s64) = (arr("decay_spc_f32"), arr("decay_spc_f64"));
    let deepest = 5;
    let later = (0..deepest).all(|i| match (s32[i], s64[i]) {
        (None, Some(_)) => true,
        (Some(a), Some(b)) => a > b,
        _ => false,
    });
    let epc_one = ["decay_epc_f32", "decay_epc_f64"]
        .iter()
        .all(|k| arr(k).iter().all(|a| *a == Some(1)));
    ok_if(
        later && epc_one,
        format!(
            "deepest {deepest} arrivals f32 {:?} vs f64 {:?}; epc at step 1 everywhere: {epc_one}",
            &s32[..deepest],
            &s64[..deepest]
        ),
    )
}

fn c7_training() -> Check {
    let acc = |name: &str| -> Result<f64, String> {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_config(name, dir.path());
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        report(dir.path())["test_accuracy"].as_f64().ok_or("no test accuracy".to_string())
    };
    let bp = acc("train_mnist_backprop.json")?;
    let epc = acc("train_mnist_epc.json")?;
    ok_if(
        bp >= 0.90 && epc >= bp - 0.03,
        format!("backprop {:.2}% (need >= 90), epc {:.2}% (need >= {:.2})", 100.0 * bp, 100.0 * epc, 100.0 * bp - 3.0),
    )
}

fn c8_gradient_trajectory() -> Check {
    let spec = MlpSpec::deep_linear(16, 16, 19, 16);
    let net = Network::mlp(&spec, &mut Rng::new(0).fork(0)).unwrap();
    let (x, y) = random_batch(&mut Rng::new(0).fork(1), &net, 64);
    let n = net.layers().len();
    let s = analytic_equilibrium_linear(&net, &x, &y).unwrap();
    let e = net.prediction_errors(&x, &s).unwrap();
    let eq = pc_weight_grads_at(&net, &x, &y, &s, &e).unwrap();

    let epc = gradient_trajectory(&net, &x, &y, Algo::Epc, 256, 0.05).map_err(|e| e.to_string())?;
    let cos_dev = epc.points[1].cosines.iter().fold(0.0f64, |m, c| m.max((c - 1.0).abs()));
    let spc = gradient_trajectory(&net, &x, &y, Algo::Spc, 4096, 0.3).map_err(|e| e.to_string())?;
    let mut zeros_ok = true;
    for i in 0..n {
        let lag = n - 1 - i;
        zeros_ok &= spc.points[..lag].iter().all(|p| p.norms[i] == 0.0);
        zeros_ok &= spc.points[lag].norms[i] > 0.0;
    }
    let (re, rs) = (epc.final_grads.max_rel_err(&eq, 1e-300), spc.final_grads.max_rel_err(&eq, 1e-300));
    ok_if(
        cos_dev <= 1e-9 && zeros_ok && re <= 1e-6 && rs <= 1e-6,
        format!(
            "epc step-1 cosine dev {cos_dev:.1e}; spc zero lag pattern: {zeros_ok}; rel err to equilibrium spc {rs:.1e} epc {re:.1e}"
        ),
    )
}

fn c9_finite_differences() -> Check {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut rng = Rng::new(99);
    for n in 0..FD_CASES as usize {
        let act = Activation::ALL[n % Activation::ALL.len()];
        let loss = if rng.below(2) == 0 { Loss::Mse } else { Loss::CrossEntropy };
        let c = case(rng.below(1 << 30) as u64, 2 + rng.below(3), act, loss, 1 + rng.below(3));
        for (name, err) in fd_checks(&c, n as u64) {
            match worst.iter_mut().find(|(k, _)| *k == name) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    let max = worst.iter().fold(0.0f64, |m, w| m.max(w.1));
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect();
    ok_if(max <= FD_TOL, format!("{FD_CASES} cases, tol {FD_TOL:e}: {}", parts.join(" ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 backprop reduction", c1_backprop_reduction, Duration::from_secs(5)),
        ("2 equivalence suite", c2_equivalence_suite, Duration::from_secs(30)),
        ("3 deep-linear convergence", c3_deep_linear_convergence, Duration::from_secs(60)),
        ("4 wavefront decay", c4_wavefront, Duration::from_secs(1)),
        ("5 binomial model", c5_binomial, Duration::from_secs(1)),
        ("6 precision phenomenology", c6_precision, Duration::from_secs(60)),
        ("7 desk-scale training", c7_training, Duration::from_secs(600)),
        ("8 gradient trajectory", c8_gradient_trajectory, Duration::from_secs(30)),
        ("9 finite differences", c9_finite_differences, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let in_time = took <= budget;
        let (pass, msg) = match result {
            Ok(m) => (in_time, m),
            Err(m) => (false, m),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {msg} [{:.2}s, budget {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
