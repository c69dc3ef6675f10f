use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::{ExperimentConfig, Precision, ReferenceMode, StepSection};
use crate::analysis::{
    analytic_equilibrium_linear, binomial_magnitude, poisson_limit, simulate_simplified_wavefront,
    simulate_simplified_wavefront_log, write_log_table_csv, DecayModel,
};
use crate::dataio::{load_idx_with, synthetic_gaussian, write_metrics, Cell, Dataset};
use crate::epc::{epc_relax, errors_to_states};
use crate::error::{PcError, Result};
use crate::model::{save_network, Loss, MlpSpec, Network, StateConfig};
use crate::numeric::{Matrix, Real, Rng};
use crate::spc::{init_states_feedforward, spc_relax};
use crate::trace::{sample_distances, Algo, RelaxConfig, RelaxTrace};
use crate::training::{
    evaluate, gradient_trajectory, metrics_rows, pc_weight_grads_at, train, GradientTrajectory, METRICS_HEADER,
};
use crate::verify::{random_batch, run_verify};

/// What a successful command prints, and whether its checks held.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub passed: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, passed: true }
    }
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn create(root: &Path) -> Result<Self> {
        for sub in ["traces", "metrics", "models"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| PcError::io(&p, e))?;
        }
        Ok(Layout { root: root.to_path_buf() })
    }

    fn trace(&self, name: &str) -> PathBuf {
        self.root.join("traces").join(name)
    }

    fn file(&self, path: &Path) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(path).map_err(|e| PcError::io(path, e))?))
    }

    fn report(&self, value: &Value) -> Result<()> {
        let p = self.root.join("report.json");
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&p, text + "\n").map_err(|e| PcError::io(&p, e))
    }
}

fn f64_only(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    if cfg.precision == Some(Precision::F32) {
        return Err(PcError::InvalidConfig(format!("{command} runs in f64 only")));
    }
    Ok(())
}

fn build_network(cfg: &ExperimentConfig) -> Result<Network> {
    let n = cfg
        .network
        .as_ref()
        .ok_or_else(|| PcError::InvalidConfig("this command needs a `network` section".into()))?;
    if let Some(p) = &n.load {
        return crate::model::load_network(p);
    }
    let spec = MlpSpec {
        dims: n.dims.clone(),
        activation: n.activation,
        output_activation: n.output_activation,
        loss: n.loss,
        gain: n.gain,
    };
    Network::mlp(&spec, &mut Rng::new(cfg.seed).fork(0))
}

fn build_batch(cfg: &ExperimentConfig, net: &Network) -> Result<(Matrix, Matrix)> {
    let b = &cfg.batch;
    match (&b.images, &b.labels) {
        (Some(img), Some(lbl)) => {
            let norm = cfg.data.as_ref().map(|d| d.normalization).unwrap_or_default();
            let data = load_idx_with(img, lbl, norm, net.output_dim())?;
            if data.len() < b.size {
                return Err(PcError::InvalidConfig(format!(
                    "batch.size {} exceeds the {} samples available",
                    b.size,
                    data.len()
                )));
            }
            let d = data.take(b.size);
            if d.input_dim() != net.input_dim() || d.num_classes != net.output_dim() {
                return Err(PcError::mismatch(
                    "batch vs network",
                    (d.input_dim(), d.num_classes),
                    (net.input_dim(), net.output_dim()),
                ));
            }
            Ok((d.images, d.one_hot))
        }
        _ => Ok(random_batch(&mut Rng::new(cfg.seed).fork(1), net, b.size)),
    }
}

/// Runs one relaxation at precision `T`; returns the trace and the final
/// states in f64.
fn relax_at<T: Real>(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    algo: Algo,
    step: StepSection,
    record_every: usize,
    reference: Option<&StateConfig>,
) -> Result<(RelaxTrace, StateConfig)> {
    let n: Network<T> = net.cast();
    let (xt, yt): (Matrix<T>, Matrix<T>) = (x.cast(), y.cast());
    let mut rc = RelaxConfig::<T>::new(step.lr, step.steps)
        .with_record_every(record_every)
        .with_momentum(step.momentum);
    if let Some(r) = reference {
        rc = rc.with_reference(r.cast());
    }
    match algo {
        Algo::Spc => {
            let (s, tr) = spc_relax(&n, &xt, &yt, &rc)?;
            Ok((tr, s.cast()))
        }
        Algo::Epc => {
            let (e, tr) = epc_relax(&n, &xt, &yt, &rc.into())?;
            Ok((tr, errors_to_states(&n, &xt, &e)?.cast()))
        }
    }
}

fn relax_with(
    precision: Precision,
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    algo: Algo,
    step: StepSection,
    record_every: usize,
    reference: Option<&StateConfig>,
) -> Result<(RelaxTrace, StateConfig)> {
    match precision {
        Precision::F64 => relax_at::<f64>(net, x, y, algo, step, record_every, reference),
        Precision::F32 => relax_at::<f32>(net, x, y, algo, step, record_every, reference),
    }
}

fn linear_mse(net: &Network) -> bool {
    net.is_linear() && net.loss() == Loss::Mse
}

/// First recorded step whose median distance to the reference is `≤ tol`.
pub fn iterations_to_tolerance(trace: &RelaxTrace, tol: f64) -> Option<usize> {
    trace
        .records
        .iter()
        .find(|r| r.median_distance.is_some_and(|d| d <= tol))
        .map(|r| r.step)
}

pub fn cmd_relax(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rc = &cfg.relax;
    if rc.algorithms.is_empty() {
        return Err(PcError::InvalidConfig("relax.algorithms is empty".into()));
    }
    let net = build_network(cfg)?;
    let use_ref = match rc.reference {
        ReferenceMode::Auto => linear_mse(&net),
        ReferenceMode::Analytic => {
            if !linear_mse(&net) {
                return Err(PcError::Contract(
                    "the analytic reference needs a linear network with MSE loss".into(),
                ));
            }
            true
        }
        ReferenceMode::None => false,
    };
    let (x, y) = build_batch(cfg, &net)?;
    let layout = Layout::create(&cfg.out)?;
    let precision = cfg.precision.unwrap_or(Precision::F64);
    let reference = if use_ref {
        Some(analytic_equilibrium_linear(&net, &x, &y)?)
    } else {
        None
    };
    let mut results = serde_json::Map::new();
    let mut lines = Vec::new();
    let mut iters = std::collections::HashMap::new();
    for &algo in &rc.algorithms {
        let step = match algo {
            Algo::Spc => rc.spc,
            Algo::Epc => rc.epc,
        };
        let (trace, final_states) = relax_with(precision, &net, &x, &y, algo, step, rc.record_every, reference.as_ref())?;
        trace.write_csv(layout.file(&layout.trace(&format!("relax_{}.csv", algo.name())))?)?;
        let last = trace.last().expect("a relaxation records at least one step");
        let it = iterations_to_tolerance(&trace, rc.tol);
        iters.insert(algo, it);
        let mut entry = json!({
            "lr": step.lr,
            "steps": step.steps,
            "momentum": step.momentum,
            "final_energy": last.energy.total,
            "final_median_distance": last.median_distance,
            "iterations_to_tol": it,
            "warnings": trace.warnings,
        });
        if let Some(r) = &reference {
            let d = sample_distances(&final_states.0, &r.0)?;
            let rows: Vec<Vec<Cell>> = d
                .iter()
                .enumerate()
                .map(|(i, &v)| vec![Cell::from(i), Cell::from(v)])
                .collect();
            write_metrics(layout.trace(&format!("relax_{}_distances.csv", algo.name())), &["sample", "distance"], &rows)?;
            entry["final_sample_distances"] = json!(d);
        }
        lines.push(format!(
            "{}: final energy {:e}, median distance {}, iterations to {:e}: {}",
            algo.name(),
            last.energy.total,
            last.median_distance.map_or("n/a".to_string(), |v| format!("{v:e}")),
            rc.tol,
            it.map_or("not reached".to_string(), |v| v.to_string())
        ));
        results.insert(algo.name().into(), entry);
    }
    let ratio = match (iters.get(&Algo::Spc), iters.get(&Algo::Epc)) {
        (Some(Some(s)), Some(Some(e))) => Some(*s as f64 / (*e).max(1) as f64),
        _ => None,
    };
    if let Some(r) = ratio {
        lines.push(format!("iterations ratio spc/epc: {r:.1}"));
    }
    layout.report(&json!({
        "command": "relax",
        "precision": precision.name(),
        "reference": use_ref,
        "tol": rc.tol,
        "results": results,
        "iterations_ratio_spc_over_epc": ratio,
    }))?;
    Ok(Outcome::ok(lines.join("\n")))
}

pub fn cmd_decay(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = &cfg.decay;
    let precisions = match cfg.precision {
        Some(p) => vec![p],
        None => d.precisions.clone(),
    };
    let model = DecayModel::new(d.binomial_layers, d.lr)?;
    let poisson_model = DecayModel::new(d.poisson_max_layer, d.poisson_lr)?;
    let net = build_network(cfg)?;
    let (x, y) = build_batch(cfg, &net)?;
    let layout = Layout::create(&cfg.out)?;
    let loss0 = net.energy_spc(&x, &y, &init_states_feedforward(&net, &x)?)?.output_loss;
    let threshold = d.threshold_scale * loss0;

    let mut arrivals = serde_json::Map::new();
    let mut lines = vec![format!("arrival threshold {threshold:e}")];
    for &p in &precisions {
        for (algo, steps) in [(Algo::Spc, d.spc_steps), (Algo::Epc, d.epc_steps)] {
            let step = StepSection {
                lr: d.lr,
                steps,
                momentum: 0.0,
            };
            let (trace, _) = relax_with(p, &net, &x, &y, algo, step, 1, None)?;
            let name = format!("decay_{}_{}", algo.name(), p.name());
            trace.write_csv(layout.file(&layout.trace(&format!("{name}.csv")))?)?;
            let arr = trace.wavefront_arrival(threshold);
            lines.push(format!("{name} arrivals: {arr:?}"));
            arrivals.insert(name, json!(arr));
        }
    }

    let sim = simulate_simplified_wavefront(d.binomial_layers, d.lr, d.binomial_steps);
    let mut rows = Vec::new();
    let mut max_formula_err = 0.0f64;
    let mut max_mass_err = 0.0f64;
    for t in 0..=d.binomial_steps {
        let mut mass = 0.0;
        for k in 0..=d.binomial_layers {
            let formula = binomial_magnitude(&model, t as u64, k as u64).exp();
            let s = sim[(t, k)];
            mass += s;
            max_formula_err = max_formula_err.max((formula - s).abs());
            rows.push(vec![Cell::from(t), Cell::from(k), Cell::from(formula), Cell::from(s)]);
        }
        // The table is truncated at the input, so mass is only conserved
        // until the wavefront reaches it.
        if t <= d.binomial_layers {
            max_mass_err = max_mass_err.max((mass - 1.0).abs());
        }
    }
    write_metrics(layout.trace("binomial.csv"), &["step", "layer", "binomial", "simulated"], &rows)?;
    let log_table = simulate_simplified_wavefront_log(d.binomial_layers, d.lr, d.binomial_steps);
    write_log_table_csv(&log_table, layout.file(&layout.trace("binomial_log10.csv"))?)?;

    let mut prow = Vec::new();
    let mut max_poisson_rel = 0.0f64;
    for &tau in &d.poisson_taus {
        let t = (tau / d.poisson_lr).round() as u64;
        for i in 0..=d.poisson_max_layer as u64 {
            let b = binomial_magnitude(&poisson_model, t, i).exp();
            let p = poisson_limit(tau, i).exp();
            let rel = (b - p).abs() / p;
            max_poisson_rel = max_poisson_rel.max(rel);
            prow.push(vec![Cell::from(tau), Cell::from(i as usize), Cell::from(t as usize), Cell::from(b), Cell::from(p), Cell::from(rel)]);
        }
    }
    write_metrics(layout.trace("poisson.csv"), &["tau", "layer", "steps", "binomial", "poisson", "rel_err"], &prow)?;
    lines.push(format!(
        "binomial vs simulation max abs err {max_formula_err:e}; mass error {max_mass_err:e}; poisson max rel err {max_poisson_rel:e}"
    ));
    layout.report(&json!({
        "command": "decay",
        "threshold": threshold,
        "arrivals": arrivals,
        "binomial_max_abs_err": max_formula_err,
        "binomial_mass_err": max_mass_err,
        "poisson_max_rel_err": max_poisson_rel,
    }))?;
    Ok(Outcome::ok(lines.join("\n")))
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    f64_only(cfg, "verify")?;
    cfg.verify.validate()?;
    let layout = Layout::create(&cfg.out)?;
    let rep = run_verify(&cfg.verify)?;
    layout.report(&json!({ "command": "verify", "report": rep }))?;
    let lines: Vec<String> = rep
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: residual {:e} (tol {:e}) {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.residual,
                c.tolerance,
                c.detail
            )
        })
        .collect();
    Ok(Outcome {
        summary: lines.join("\n"),
        passed: rep.passed,
    })
}

fn load_split(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>)> {
    let d = cfg
        .data
        .as_ref()
        .ok_or_else(|| PcError::InvalidConfig("train needs a `data` section".into()))?;
    if let Some(s) = &d.synthetic {
        let all = synthetic_gaussian(s.train + s.test, s.dim, s.classes, &mut Rng::new(cfg.seed).fork(2))?;
        let train_idx: Vec<usize> = (0..s.train).collect();
        let test_idx: Vec<usize> = (s.train..s.train + s.test).collect();
        let test = (s.test > 0).then(|| all.subset(&test_idx));
        return Ok((all.subset(&train_idx), test));
    }
    let (ti, tl) = match (&d.train_images, &d.train_labels) {
        (Some(i), Some(l)) => (i, l),
        _ => {
            return Err(PcError::InvalidConfig(
                "data needs train_images and train_labels (or synthetic)".into(),
            ))
        }
    };
    let cut = |ds: Dataset, n: Option<usize>| match n {
        Some(n) => ds.take(n.min(ds.len())),
        None => ds,
    };
    let train_set = cut(load_idx_with(ti, tl, d.normalization, d.num_classes)?, d.train_subset);
    let test = match (&d.test_images, &d.test_labels) {
        (Some(i), Some(l)) => Some(cut(load_idx_with(i, l, d.normalization, d.num_classes)?, d.test_subset)),
        (None, None) => None,
        _ => return Err(PcError::InvalidConfig("test_images and test_labels go together".into())),
    };
    Ok((train_set, test))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    f64_only(cfg, "train")?;
    cfg.train.validate()?;
    let net = build_network(cfg)?;
    let (train_set, test_set) = load_split(cfg)?;
    let layout = Layout::create(&cfg.out)?;
    let (trained, metrics) = train(&net, &train_set, &cfg.train)?;
    write_metrics(layout.root.join("metrics").join("train.csv"), &METRICS_HEADER, &metrics_rows(&metrics))?;
    let model_path = layout.root.join("models").join("model.pcn1");
    save_network(&trained, &model_path)?;
    let test_accuracy = test_set.as_ref().map(|t| evaluate(&trained, t));
    layout.report(&json!({
        "command": "train",
        "config": cfg.train,
        "train_samples": train_set.len(),
        "test_samples": test_set.as_ref().map(Dataset::len),
        "test_accuracy": test_accuracy,
        "metrics": metrics,
        "model": model_path,
    }))?;
    let summary = match test_accuracy {
        Some(a) => format!("test accuracy: {:.4}", a),
        None => "no test set given".to_string(),
    };
    Ok(Outcome::ok(summary))
}

/// Default export: bottom, middle and top layer.
pub fn default_layers(n: usize) -> Vec<usize> {
    let mut v = vec![0, n / 2, n - 1];
    v.dedup();
    v
}

pub fn cmd_gradtraj(cfg: &ExperimentConfig) -> Result<Outcome> {
    f64_only(cfg, "gradtraj")?;
    let g = &cfg.gradtraj;
    if g.algorithms.is_empty() {
        return Err(PcError::InvalidConfig("gradtraj.algorithms is empty".into()));
    }
    let net = build_network(cfg)?;
    let n = net.layers().len();
    let layers = g.layers.clone().unwrap_or_else(|| default_layers(n));
    if let Some(&bad) = layers.iter().find(|&&i| i >= n) {
        return Err(PcError::InvalidConfig(format!("gradtraj.layers: {bad} out of range (net has {n})")));
    }
    let (x, y) = build_batch(cfg, &net)?;
    let layout = Layout::create(&cfg.out)?;
    let analytic = if linear_mse(&net) {
        let s = analytic_equilibrium_linear(&net, &x, &y)?;
        let e = net.prediction_errors(&x, &s)?;
        Some(pc_weight_grads_at(&net, &x, &y, &s, &e)?)
    } else {
        None
    };
    let mut results = serde_json::Map::new();
    let mut lines = Vec::new();
    let mut trajs: Vec<GradientTrajectory> = Vec::new();
    for &algo in &g.algorithms {
        let step = match algo {
            Algo::Spc => g.spc,
            Algo::Epc => g.epc,
        };
        let tr = gradient_trajectory(&net, &x, &y, algo, step.steps, step.lr)?;
        tr.write_csv_layers(layout.file(&layout.trace(&format!("gradtraj_{}.csv", algo.name())))?, &layers)?;
        let last = tr.points.last().expect("at least one point");
        let vs_analytic = analytic.as_ref().map(|a| tr.final_grads.max_rel_err(a, 1e-300));
        lines.push(format!(
            "{}: final cosines to backprop {:?}{}",
            algo.name(),
            layers.iter().map(|&i| last.cosines[i]).collect::<Vec<_>>(),
            vs_analytic.map_or(String::new(), |v| format!(", rel err to equilibrium grads {v:e}"))
        ));
        results.insert(
            algo.name().into(),
            json!({
                "lr": step.lr,
                "steps": step.steps,
                "step1_cosines": tr.points.get(1).map(|p| p.cosines.clone()),
                "final_cosines": last.cosines,
                "final_norms": last.norms,
                "final_rel_err_to_equilibrium": vs_analytic,
            }),
        );
        trajs.push(tr);
    }
    let agreement = (trajs.len() == 2).then(|| trajs[0].final_grads.max_rel_err(&trajs[1].final_grads, 1e-300));
    if let Some(a) = agreement {
        lines.push(format!("final spc vs epc rel err {a:e}"));
    }
    layout.report(&json!({
        "command": "gradtraj",
        "layers": layers,
        "results": results,
        "final_agreement": agreement,
    }))?;
    Ok(Outcome::ok(lines.join("\n")))
}
