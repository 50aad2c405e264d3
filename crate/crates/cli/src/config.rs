//! Run configuration: JSON file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use salref_core::eval::ResampleUnit;
use salref_core::refine::{ClassWeights, LrConfig};
use salref_core::synth::PhantomSpec;
use salref_core::tinynet::GradientTarget;
use salref_core::{RadiomicsConfig, SaliencyConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n_train: usize,
    pub n_test: usize,
    /// Decoys per phantom.
    pub n_fp: usize,
    /// Template spec; the seed is derived per phantom from the run seed.
    pub phantom: PhantomSpec,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings { n_train: 6, n_test: 6, n_fp: 5, phantom: PhantomSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSettings {
    pub epochs: usize,
    pub lr: f64,
    pub target: GradientTarget,
}

impl Default for ScorerSettings {
    fn default() -> Self {
        ScorerSettings { epochs: 40, lr: 1e-2, target: GradientTarget::Sigmoid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSettings {
    pub lambda: f64,
    pub class_weights: ClassWeights,
    pub max_iter: usize,
    pub tol: f64,
    pub threshold: f64,
}

impl Default for LrSettings {
    fn default() -> Self {
        let d = LrConfig::default();
        LrSettings { lambda: d.lambda, class_weights: d.class_weights, max_iter: d.max_iter, tol: d.tol, threshold: 0.5 }
    }
}

impl LrSettings {
    pub fn solver(&self) -> LrConfig {
        LrConfig { lambda: self.lambda, class_weights: self.class_weights, max_iter: self.max_iter, tol: self.tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub b: usize,
    pub alpha: f64,
    pub unit: ResampleUnit,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings { b: 1000, alpha: 0.05, unit: ResampleUnit::Lesion }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory for every stage.
    pub out: PathBuf,
    /// Case directory; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Channel-wise z-scoring of the input volumes.
    pub normalize_inputs: bool,
    pub synth: SynthSettings,
    pub scorer: ScorerSettings,
    pub saliency: SaliencyConfig,
    pub radiomics: RadiomicsConfig,
    pub lr: LrSettings,
    pub bootstrap: BootstrapSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("salref-out"),
            data_dir: None,
            seed: 0,
            workers: None,
            normalize_inputs: true,
            synth: SynthSettings::default(),
            scorer: ScorerSettings::default(),
            saliency: SaliencyConfig::default(),
            radiomics: RadiomicsConfig::default(),
            lr: LrSettings::default(),
            bootstrap: BootstrapSettings::default(),
        }
    }
}

impl RunConfig {
    /// Loads `path` (or defaults) and applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for kv in overrides {
            apply_override(&mut value, kv)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
        Ok(cfg)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.workers == Some(0) {
            errs.push("workers: must be at least 1".to_string());
        }
        if self.synth.n_train == 0 || self.synth.n_test == 0 {
            errs.push("synth.n_train / synth.n_test: need at least one case each".into());
        }
        if let Err(e) = self.synth.phantom.validate() {
            errs.push(format!("synth.phantom: {e}"));
        }
        if self.scorer.epochs == 0 {
            errs.push("scorer.epochs: must be at least 1".into());
        }
        if !(self.scorer.lr > 0.0) {
            errs.push("scorer.lr: must be positive".into());
        }
        if let Err(e) = self.saliency.validate() {
            errs.push(format!("saliency: {e}"));
        }
        if self.saliency.channel >= self.synth.phantom.n_channels && self.data_dir.is_none() {
            errs.push("saliency.channel: exceeds synth.phantom.n_channels".into());
        }
        if !(self.radiomics.bin_width > 0.0) {
            errs.push("radiomics.bin_width: must be positive".into());
        }
        if self.radiomics.dilation_radius == 0 {
            errs.push("radiomics.dilation_radius: must be at least 1".into());
        }
        if self.radiomics.log_sigmas.iter().any(|s| !(*s > 0.0)) {
            errs.push("radiomics.log_sigmas: all scales must be positive".into());
        }
        let s = &self.lr;
        if !(s.lambda >= 0.0) {
            errs.push("lr.lambda: must be >= 0".into());
        }
        if !(s.class_weights.tp > 0.0 && s.class_weights.fp > 0.0) {
            errs.push("lr.class_weights: both weights must be positive".into());
        }
        if s.max_iter == 0 || !(s.tol > 0.0) {
            errs.push("lr.max_iter / lr.tol: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lr.threshold) {
            errs.push("lr.threshold: must lie in [0, 1]".into());
        }
        if self.bootstrap.b == 0 {
            errs.push("bootstrap.b: must be at least 1".into());
        }
        if !(self.bootstrap.alpha > 0.0 && self.bootstrap.alpha < 1.0) {
            errs.push("bootstrap.alpha: must lie in (0, 1)".into());
        }
        if let Some(d) = &self.data_dir {
            if !d.is_dir() {
                errs.push(format!("data_dir: {} does not exist", d.display()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", errs.join("\n  "))
        }
    }
}

/// Sets a dotted key; the value is parsed as JSON, or taken as a string.
pub fn apply_override(root: &mut Value, kv: &str) -> Result<()> {
    let (key, raw) = kv.split_once('=').with_context(|| format!("override {kv:?} is not key=value"))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().with_context(|| format!("override {key:?}: {part:?} is not inside an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    bail!("empty override key")
}
