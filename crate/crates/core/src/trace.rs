//! Relaxation configuration and per-step records shared by both algorithms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PcError, Result};
use crate::model::{EnergyReport, StateConfig};
use crate::numeric::{Matrix, Real};

/// Total energy above which a relaxation is aborted.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Which set of variables is being relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Spc,
    Epc,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Spc => "spc",
            Algo::Epc => "epc",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spc" => Ok(Algo::Spc),
            "epc" => Ok(Algo::Epc),
            other => Err(format!("unknown algorithm `{other}` (expected spc or epc)")),
        }
    }
}

/// Settings of a fixed-step SGD relaxation.
#[derive(Debug, Clone)]
pub struct RelaxConfig<T = f64> {
    /// Step size `λ`.
    pub lr: f64,
    /// Number of updates `T`.
    pub steps: usize,
    pub record_every: usize,
    /// States to measure distances against (e.g. an analytic optimum).
    pub reference: Option<StateConfig<T>>,
    /// Heavy-ball coefficient; 0 is plain SGD.
    pub momentum: f64,
    /// Stop early once the largest gradient entry falls below this.
    pub tol: Option<f64>,
    pub divergence_threshold: f64,
}

impl<T: Real> RelaxConfig<T> {
    pub fn new(lr: f64, steps: usize) -> Self {
        RelaxConfig {
            lr,
            steps,
            record_every: 1,
            reference: None,
            momentum: 0.0,
            tol: None,
            divergence_threshold: DIVERGENCE_THRESHOLD,
        }
    }

    pub fn with_reference(mut self, reference: StateConfig<T>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PcError::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.steps == 0 {
            return Err(PcError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(PcError::InvalidConfig("record_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(PcError::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Snapshot of one relaxation step, taken before that step's update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub energy: EnergyReport,
    /// Batch median of the per-sample gradient norm, per layer.
    pub grad_norms: Vec<f64>,
    /// Batch median of the per-sample L2 distance of the states to the
    /// reference, per layer.
    pub distances: Option<Vec<f64>>,
    /// Batch median of the per-sample distance over all layers jointly.
    pub median_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxTrace {
    pub algo: Algo,
    pub record_every: usize,
    pub records: Vec<TraceRecord>,
    /// Step at which the tolerance was met, if early exit triggered.
    pub converged_at: Option<usize>,
    pub warnings: Vec<String>,
}

impl RelaxTrace {
    pub fn new(algo: Algo, record_every: usize) -> Self {
        RelaxTrace {
            algo,
            record_every,
            records: Vec::new(),
            converged_at: None,
            warnings: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn num_layers(&self) -> usize {
        self.records.first().map_or(0, |r| r.energy.layer_energies.len())
    }

    /// Energy of layer `i` at every recorded step.
    pub fn layer_series(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.energy.layer_energies[i]).collect()
    }

    /// First recorded step at which `E_i > threshold`, per layer; `None` if
    /// the layer never crossed it. Steps are only as fine as `record_every`.
    pub fn wavefront_arrival(&self, threshold: f64) -> Vec<Option<usize>> {
        (0..self.num_layers())
            .map(|i| {
                self.records
                    .iter()
                    .find(|r| r.energy.layer_energies[i] > threshold)
                    .map(|r| r.step)
            })
            .collect()
    }

    /// CSV with columns `algo, step, E_0.., loss, dist_0.., dist` (distances
    /// only when a reference was given; `dist` is the joint median).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let l = self.num_layers();
        let with_dist = self.records.iter().any(|r| r.distances.is_some());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["algo".to_string(), "step".to_string()];
        header.extend((0..l).map(|i| format!("E_{i}")));
        header.push("loss".into());
        if with_dist {
            header.extend((0..l).map(|i| format!("dist_{i}")));
            header.push("dist".into());
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![self.algo.name().to_string(), r.step.to_string()];
            row.extend(r.energy.layer_energies.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", r.energy.output_loss));
            if with_dist {
                match &r.distances {
                    Some(d) => row.extend(d.iter().map(|v| format!("{v:e}"))),
                    None => row.extend(std::iter::repeat_n(String::new(), l)),
                }
                row.push(r.median_distance.map_or(String::new(), |v| format!("{v:e}")));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| PcError::io("<csv>", e))?;
        Ok(())
    }
}

/// Energy and per-sample gradients of one configuration.
#[derive(Debug, Clone)]
pub struct Evaluation<T = f64> {
    pub report: EnergyReport,
    /// Gradient of each sample's own energy, per layer.
    pub grads: Vec<Matrix<T>>,
    /// Reconstructed states, when the variables are not the states.
    pub states: Option<Vec<Matrix<T>>>,
}

/// Shared SGD loop. Records the configuration before each update, plus the
/// final one.
pub(crate) fn run_relaxation<T: Real>(
    algo: Algo,
    cfg: &RelaxConfig<T>,
    vars: &mut [Matrix<T>],
    mut eval: impl FnMut(&[Matrix<T>]) -> Result<Evaluation<T>>,
) -> Result<RelaxTrace> {
    cfg.validate()?;
    let mut trace = RelaxTrace::new(algo, cfg.record_every);
    let lr = T::of(cfg.lr);
    let mu = T::of(cfg.momentum);
    let mut velocity: Option<Vec<Matrix<T>>> = (cfg.momentum > 0.0)
        .then(|| vars.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect());
    for t in 0..=cfg.steps {
        let ev = eval(vars)?;
        guard(&ev.report, t, cfg.divergence_threshold)?;
        let gmax = ev.grads.iter().fold(0.0f64, |m, g| m.max(g.max_abs().as_f64()));
        let converged = cfg.tol.is_some_and(|tol| gmax < tol);
        if t % cfg.record_every == 0 || t == cfg.steps || converged {
            let (distances, median_distance) = match &cfg.reference {
                Some(r) => {
                    let cur = ev.states.as_deref().unwrap_or(vars);
                    (
                        Some(median_distances(cur, &r.0)?),
                        Some(median(sample_distances(cur, &r.0)?)),
                    )
                }
                None => (None, None),
            };
            trace.records.push(TraceRecord {
                step: t,
                energy: ev.report.clone(),
                grad_norms: ev.grads.iter().map(median_row_norm).collect(),
                distances,
                median_distance,
            });
        }
        if converged {
            trace.converged_at = Some(t);
            break;
        }
        if t == cfg.steps {
            break;
        }
        match velocity.as_mut() {
            Some(vel) => {
                for ((v, g), x) in vel.iter_mut().zip(&ev.grads).zip(vars.iter_mut()) {
                    *v = v.scale(mu);
                    v.add_assign(g)?;
                    x.axpy(-lr, v)?;
                }
            }
            None => {
                for (g, x) in ev.grads.iter().zip(vars.iter_mut()) {
                    x.axpy(-lr, g)?;
                }
            }
        }
    }
    Ok(trace)
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn median_row_norm<T: Real>(m: &Matrix<T>) -> f64 {
    median(m.row_norms_sq().into_iter().map(|v| v.as_f64().sqrt()).collect())
}

pub(crate) fn median_distances<T: Real>(a: &[Matrix<T>], b: &[Matrix<T>]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(PcError::mismatch("reference", (a.len(), 0), (b.len(), 0)));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| Ok(median_row_norm(&x.sub(y)?)))
        .collect()
}

/// Per-sample L2 distance between two configurations, all layers jointly.
pub fn sample_distances<T: Real>(a: &[Matrix<T>], b: &[Matrix<T>]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(PcError::mismatch("reference", (a.len(), 0), (b.len(), 0)));
    }
    let rows = a.first().map_or(0, |m| m.rows());
    let mut acc = vec![0.0f64; rows];
    for (x, y) in a.iter().zip(b) {
        for (s, v) in acc.iter_mut().zip(x.sub(y)?.row_norms_sq()) {
            *s += v.as_f64();
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// Aborts on non-finite or exploding energies.
pub(crate) fn guard(report: &EnergyReport, step: usize, threshold: f64) -> Result<()> {
    if !report.total.is_finite() || report.total > threshold {
        log::error!(
            "relaxation diverged at step {step}: total energy {:e} (layers {:?}, loss {:e})",
            report.total,
            report.layer_energies,
            report.output_loss
        );
        return Err(PcError::Divergence {
            step,
            energy: report.total,
        });
    }
    Ok(())
}
