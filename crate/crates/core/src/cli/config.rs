use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::Normalization;
use crate::error::{PcError, Result};
use crate::model::{Activation, Loss};
use crate::trace::Algo;
use crate::training::TrainConfig;
use crate::verify::VerifyConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

/// One JSON document drives every command; each command reads the shared
/// fields plus its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Unset means the command default (relax: f64, decay: both).
    #[serde(default)]
    pub precision: Option<Precision>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub network: Option<NetworkSection>,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub relax: RelaxSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub gradtraj: GradtrajSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// Either an orthogonally initialized MLP or a PCN1 file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    pub loss: Loss,
    pub gain: f64,
    pub load: Option<PathBuf>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            dims: Vec::new(),
            activation: Activation::Identity,
            output_activation: Activation::Identity,
            loss: Loss::Mse,
            gain: 1.0,
            load: None,
        }
    }
}

/// The single batch used by relax, decay and gradtraj.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub size: usize,
    /// Take the first `size` samples of this IDX pair instead of Gaussian
    /// inputs and random targets.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for BatchSection {
    fn default() -> Self {
        BatchSection {
            size: 64,
            images: None,
            labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first `n` training / test samples.
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub normalization: Normalization,
    pub num_classes: usize,
    /// Gaussian blobs instead of IDX files.
    pub synthetic: Option<SyntheticSection>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_subset: None,
            test_subset: None,
            normalization: Normalization::default(),
            num_classes: 10,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub train: usize,
    pub test: usize,
    pub dim: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub lr: f64,
    pub steps: usize,
    pub momentum: f64,
}

impl StepSection {
    fn new(lr: f64, steps: usize) -> Self {
        StepSection { lr, steps, momentum: 0.0 }
    }
}

impl Default for StepSection {
    fn default() -> Self {
        StepSection::new(0.1, 64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Analytic optimum when the net is linear with MSE, otherwise none.
    #[default]
    Auto,
    Analytic,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSection {
    pub algorithms: Vec<Algo>,
    pub spc: StepSection,
    pub epc: StepSection,
    pub record_every: usize,
    pub reference: ReferenceMode,
    /// Median distance defining "iterations to tolerance".
    pub tol: f64,
}

impl Default for RelaxSection {
    fn default() -> Self {
        RelaxSection {
            algorithms: vec![Algo::Spc, Algo::Epc],
            spc: StepSection::new(0.3, 4096),
            epc: StepSection::new(0.05, 256),
            record_every: 1,
            reference: ReferenceMode::Auto,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub lr: f64,
    pub spc_steps: usize,
    pub epc_steps: usize,
    pub precisions: Vec<Precision>,
    /// Arrival threshold relative to the initial output loss.
    pub threshold_scale: f64,
    pub binomial_layers: usize,
    pub binomial_steps: usize,
    pub poisson_lr: f64,
    pub poisson_taus: Vec<f64>,
    pub poisson_max_layer: usize,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection {
            lr: 0.1,
            spc_steps: 64,
            epc_steps: 8,
            precisions: vec![Precision::F32, Precision::F64],
            threshold_scale: 1e-30,
            binomial_layers: 20,
            binomial_steps: 64,
            poisson_lr: 1e-4,
            poisson_taus: vec![0.5, 1.0, 2.0],
            poisson_max_layer: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradtrajSection {
    pub algorithms: Vec<Algo>,
    pub spc: StepSection,
    pub epc: StepSection,
    /// Layer indices to export; default bottom, middle and top.
    pub layers: Option<Vec<usize>>,
}

impl Default for GradtrajSection {
    fn default() -> Self {
        GradtrajSection {
            algorithms: vec![Algo::Spc, Algo::Epc],
            spc: StepSection::new(0.3, 4096),
            epc: StepSection::new(0.05, 256),
            layers: None,
        }
    }
}

/// Sets `a.b.c = value` in a JSON tree, creating objects along the way.
/// `value` is parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, key: &str, value: &str) -> Result<()> {
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PcError::InvalidConfig(format!("bad override key `{key}`")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| PcError::InvalidConfig(format!("`{key}`: `{p}` is not inside an object")))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| PcError::InvalidConfig(format!("`{key}` does not address an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (or starts from `{schema_version: 1}`), applies the
    /// `key=value` overrides and deserializes with unknown keys rejected.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| PcError::io(p, e))?;
                serde_json::from_str(&text)?
            }
            None => serde_json::json!({ "schema_version": SCHEMA_VERSION }),
        };
        if !root.is_object() {
            return Err(PcError::InvalidConfig("config must be a JSON object".into()));
        }
        for (k, v) in overrides {
            apply_override(&mut root, k, v)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(root)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PcError::InvalidConfig(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(n) = &self.network {
            if n.load.is_none() {
                if n.dims.len() < 3 {
                    return Err(PcError::InvalidConfig(
                        "network.dims needs at least three widths (two layers)".into(),
                    ));
                }
                if n.dims.contains(&0) {
                    return Err(PcError::InvalidConfig("network.dims must be positive".into()));
                }
                if !(n.gain > 0.0 && n.gain.is_finite()) {
                    return Err(PcError::InvalidConfig("network.gain must be positive".into()));
                }
            }
        }
        if self.batch.size == 0 {
            return Err(PcError::InvalidConfig("batch.size must be positive".into()));
        }
        if self.batch.images.is_some() != self.batch.labels.is_some() {
            return Err(PcError::InvalidConfig("batch.images and batch.labels go together".into()));
        }
        for (name, s) in [
            ("relax.spc", self.relax.spc),
            ("relax.epc", self.relax.epc),
            ("gradtraj.spc", self.gradtraj.spc),
            ("gradtraj.epc", self.gradtraj.epc),
        ] {
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(PcError::InvalidConfig(format!("{name}.lr must be positive")));
            }
            if !(0.0..1.0).contains(&s.momentum) {
                return Err(PcError::InvalidConfig(format!("{name}.momentum must lie in [0, 1)")));
            }
        }
        if self.relax.record_every == 0 {
            return Err(PcError::InvalidConfig("relax.record_every must be positive".into()));
        }
        if !(self.relax.tol > 0.0) {
            return Err(PcError::InvalidConfig("relax.tol must be positive".into()));
        }
        let d = &self.decay;
        if !(d.lr > 0.0 && d.lr < 1.0) || !(d.poisson_lr > 0.0 && d.poisson_lr < 1.0) {
            return Err(PcError::InvalidConfig("decay step sizes must lie in (0, 1)".into()));
        }
        if !(d.threshold_scale > 0.0) {
            return Err(PcError::InvalidConfig("decay.threshold_scale must be positive".into()));
        }
        if d.poisson_taus.iter().any(|&t| !(t > 0.0)) {
            return Err(PcError::InvalidConfig("decay.poisson_taus must be positive".into()));
        }
        if d.precisions.is_empty() {
            return Err(PcError::InvalidConfig("decay.precisions is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.batch.size, 64);
        assert_eq!(cfg.relax.epc.lr, 0.05);
        assert!(cfg.network.is_none());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v = serde_json::json!({"schema_version": 1, "relax": {"lrr": 0.1}});
        let r: std::result::Result<ExperimentConfig, _> = serde_json::from_value(v.take());
        assert!(r.is_err());
    }

    #[test]
    fn overrides_nest_and_parse() {
        let o = vec![
            ("relax.spc.lr".to_string(), "0.2".to_string()),
            ("out".to_string(), "somewhere".to_string()),
            ("network.dims".to_string(), "[2,3,1]".to_string()),
        ];
        let cfg = ExperimentConfig::load(None, &o).unwrap();
        assert_eq!(cfg.relax.spc.lr, 0.2);
        assert_eq!(cfg.out, PathBuf::from("somewhere"));
        assert_eq!(cfg.network.unwrap().dims, vec![2, 3, 1]);
    }

    #[test]
    fn out_of_range_rejected() {
        for (k, v) in [("relax.spc.lr", "-1"), ("batch.size", "0"), ("schema_version", "2"), ("decay.lr", "1.5")] {
            let r = ExperimentConfig::load(None, &[(k.to_string(), v.to_string())]);
            assert!(r.is_err(), "{k}={v}");
        }
    }
}
