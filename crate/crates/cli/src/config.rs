//! Experiment configuration files.
//!
//! A config is a TOML document; nested keys may be written as dotted keys
//! (`train.batch = 256`) or as tables. Unknown keys are rejected, and
//! [`ExperimentConfig::validate`] names the first offending field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lfoica_core::causal::{moment_transition, TransitionInit};
use lfoica_core::diffcore::AdamConfig;
use lfoica_core::mmd::{Estimator, DEFAULT_MULTIPLIERS};
use lfoica_core::oica::{KernelOptions, TrainConfig};
use lfoica_core::sources::{MlpConfig, MogConfig, SourceConfig, SourceKind};
use lfoica_core::Matrix;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Oica,
    MeasurementError,
    Subsampled,
    Aggregated,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Oica => "oica",
            Task::MeasurementError => "measurement-error",
            Task::Subsampled => "subsampled",
            Task::Aggregated => "aggregated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Laplace sources with distinct scales.
    #[default]
    Laplace,
    /// Two-component Gaussian mixtures with distinct proportions.
    Mog,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Observed mixtures (oica).
    pub p: Option<usize>,
    /// Independent sources (oica).
    pub d: Option<usize>,
    /// Variables (causal tasks).
    pub n: Option<usize>,
    /// i.i.d. sample size (oica, measurement-error).
    pub samples: Option<usize>,
    /// Observed series length (subsampled, aggregated).
    pub t: Option<usize>,
    /// Subsampling or aggregation factor.
    pub k: Option<usize>,
    /// Piece length (aggregated).
    pub l: Option<usize>,
    #[serde(default)]
    pub recipe: Recipe,
    /// Probability of each allowed edge in the random DAG (measurement-error).
    pub edge_prob: Option<f64>,
    /// High-resolution burn-in steps for VAR series.
    pub burn_in: Option<usize>,
    /// Observed data file; replaces the synthetic recipe when set.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourcesChoice {
    Mlp,
    Mog,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionStart {
    Zero,
    Uniform,
    /// Principal `k`-th root of the least-squares VAR(1) fit of the observed
    /// series; falls back to `uniform` when the root does not exist.
    #[default]
    Moment,
}

/// Starting point for the measurement-error adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyStart {
    Zero,
    /// Square FastICA on the observations, rows matched to the diagonal;
    /// falls back to `zero` when ICA fails.
    #[default]
    Ica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub sources: SourcesChoice,
    pub mog_components: usize,
    pub tau: f64,
    pub learn_weights: bool,
    pub mlp_hidden: Vec<usize>,
    pub mlp_slope: f64,
    /// Start the mixing matrix at the ground truth plus noise (oica only).
    pub oracle_init: bool,
    /// Standard deviation of the oracle-init noise.
    pub init_noise: f64,
    /// Half width of the uniform mixing-matrix init.
    pub init_half_width: f64,
    pub transition_init: TransitionStart,
    pub adjacency_init: AdjacencyStart,
}

impl Default for ModelSection {
    fn default() -> Self {
        let mlp = MlpConfig::default();
        let mog = MogConfig::default();
        ModelSection {
            sources: SourcesChoice::Auto,
            mog_components: mog.components,
            tau: mog.tau,
            learn_weights: mog.learn_weights,
            mlp_hidden: mlp.hidden,
            mlp_slope: mlp.slope,
            oracle_init: false,
            init_noise: 0.5,
            init_half_width: 0.5,
            transition_init: TransitionStart::Moment,
            adjacency_init: AdjacencyStart::Ica,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch: usize,
    pub gen_batch: Option<usize>,
    pub iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub final_lr_ratio: f64,
    /// L1 weight; defaults to 0 for oica and 1e-3 for measurement-error.
    pub lambda: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainSection {
            batch: 256,
            gen_batch: None,
            iters: 2000,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            final_lr_ratio: 1.0,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    #[default]
    Biased,
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub multipliers: Vec<f64>,
    pub estimator: EstimatorChoice,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            estimator: EstimatorChoice::Biased,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub kernel: KernelSection,
}

fn field(name: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.to_string(),
        message: msg.into(),
    }
}

fn required(value: Option<usize>, name: &str, min: usize) -> Result<usize, ConfigError> {
    match value {
        None => Err(field(name, "required for this task")),
        Some(v) if v < min => Err(field(name, format!("must be >= {min}, got {v}"))),
        Some(v) => Ok(v),
    }
}

fn positive(value: f64, name: &str) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be a positive number, got {value}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Reconcile the task named in the file with the requested one.
    pub fn resolve_task(&self, requested: Option<Task>) -> Result<Task, ConfigError> {
        match (self.task, requested) {
            (Some(a), Some(b)) if a != b => Err(field(
                "task",
                format!("config is for `{a}` but `{b}` was requested"),
            )),
            (Some(t), _) | (None, Some(t)) => Ok(t),
            (None, None) => Err(field("task", "required")),
        }
    }

    /// Check every field the task needs, naming the first one that fails.
    pub fn validate(&self, task: Task) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(field("replications", "must be >= 1"));
        }
        let d = &self.data;
        let t = &self.train;
        match task {
            Task::Oica => {
                let p = required(d.p, "data.p", 1)?;
                let dd = required(d.d, "data.d", 1)?;
                if dd < p {
                    return Err(field("data.d", format!("must be >= data.p = {p}")));
                }
                if d.csv.is_none() {
                    let n = required(d.samples, "data.samples", 2)?;
                    if n < t.batch {
                        return Err(field("train.batch", format!("exceeds data.samples = {n}")));
                    }
                } else if self.model.oracle_init {
                    return Err(field("model.oracle_init", "needs synthetic data with a known mixing matrix"));
                }
            }
            Task::MeasurementError => {
                required(d.n, "data.n", 2)?;
                if d.csv.is_none() {
                    let n = required(d.samples, "data.samples", 2)?;
                    if n < t.batch {
                        return Err(field("train.batch", format!("exceeds data.samples = {n}")));
                    }
                }
                if let Some(pr) = d.edge_prob {
                    if !(0.0..=1.0).contains(&pr) {
                        return Err(field("data.edge_prob", "must lie in [0, 1]"));
                    }
                }
            }
            Task::Subsampled => {
                required(d.n, "data.n", 1)?;
                required(d.k, "data.k", 1)?;
                if d.csv.is_none() {
                    let len = required(d.t, "data.t", 2)?;
                    if len < t.batch + 1 {
                        return Err(field(
                            "data.t",
                            format!("must be >= train.batch + 1 = {}", t.batch + 1),
                        ));
                    }
                }
            }
            Task::Aggregated => {
                required(d.n, "data.n", 1)?;
                required(d.k, "data.k", 1)?;
                let l = required(d.l, "data.l", 2)?;
                if d.csv.is_none() {
                    let len = required(d.t, "data.t", l)?;
                    let pieces = len / l;
                    if pieces < 2 {
                        return Err(field("data.l", format!("leaves {pieces} piece(s); need at least 2")));
                    }
                    if t.batch > pieces {
                        return Err(field("train.batch", format!("exceeds the {pieces} pieces of the series")));
                    }
                }
            }
        }
        if task != Task::Oica && self.model.oracle_init {
            return Err(field("model.oracle_init", "only available for the oica task"));
        }
        if t.batch < 2 {
            return Err(field("train.batch", "must be >= 2"));
        }
        if t.gen_batch.is_some_and(|g| g < 2) {
            return Err(field("train.gen_batch", "must be >= 2"));
        }
        if t.iters == 0 {
            return Err(field("train.iters", "must be >= 1"));
        }
        positive(t.lr, "train.lr")?;
        if !(0.0..1.0).contains(&t.beta1) {
            return Err(field("train.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&t.beta2) {
            return Err(field("train.beta2", "must lie in [0, 1)"));
        }
        positive(t.eps, "train.eps")?;
        if !(t.final_lr_ratio > 0.0 && t.final_lr_ratio <= 1.0) {
            return Err(field("train.final_lr_ratio", "must lie in (0, 1]"));
        }
        if let Some(l) = t.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(field("train.lambda", "must be finite and >= 0"));
            }
        }
        let m = &self.model;
        if m.mog_components == 0 {
            return Err(field("model.mog_components", "must be >= 1"));
        }
        positive(m.tau, "model.tau")?;
        if m.mlp_hidden.iter().any(|w| *w == 0) {
            return Err(field("model.mlp_hidden", "layer widths must be >= 1"));
        }
        if !(m.mlp_slope >= 0.0 && m.mlp_slope < 1.0) {
            return Err(field("model.mlp_slope", "must lie in [0, 1)"));
        }
        if !(m.init_noise >= 0.0 && m.init_noise.is_finite()) {
            return Err(field("model.init_noise", "must be finite and >= 0"));
        }
        positive(m.init_half_width, "model.init_half_width")?;
        if self.kernel.multipliers.is_empty() {
            return Err(field("kernel.multipliers", "must not be empty"));
        }
        for v in &self.kernel.multipliers {
            positive(*v, "kernel.multipliers")?;
        }
        Ok(())
    }

    pub fn source_config(&self) -> SourceConfig {
        let m = &self.model;
        SourceConfig {
            kind: match m.sources {
                SourcesChoice::Mlp => SourceKind::Mlp,
                SourcesChoice::Mog => SourceKind::Mog,
                SourcesChoice::Auto => SourceKind::Auto,
            },
            mlp: MlpConfig {
                hidden: m.mlp_hidden.clone(),
                slope: m.mlp_slope,
            },
            mog: MogConfig {
                components: m.mog_components,
                tau: m.tau,
                learn_weights: m.learn_weights,
            },
        }
    }

    /// Starting transition for `series`; the flag reports a moment start
    /// that fell back to the uniform draw.
    pub fn transition_init(&self, series: &Matrix, k: usize) -> (TransitionInit, bool) {
        match self.model.transition_init {
            TransitionStart::Zero => (TransitionInit::Zero, false),
            TransitionStart::Uniform => (TransitionInit::default(), false),
            TransitionStart::Moment => match moment_transition(series, k) {
                Some(c) => (TransitionInit::Given(c), false),
                None => (TransitionInit::default(), true),
            },
        }
    }

    /// Training settings for replication seed `seed`.
    pub fn train_config(&self, task: Task, seed: u64) -> TrainConfig {
        let t = &self.train;
        let default_lambda = match task {
            Task::MeasurementError => 1e-3,
            _ => 0.0,
        };
        TrainConfig {
            batch: t.batch,
            gen_batch: t.gen_batch,
            iters: t.iters,
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            lambda: t.lambda.unwrap_or(default_lambda),
            final_lr_ratio: t.final_lr_ratio,
            kernel: KernelOptions {
                multipliers: self.kernel.multipliers.clone(),
                estimator: match self.kernel.estimator {
                    EstimatorChoice::Biased => Estimator::Biased,
                    EstimatorChoice::Unbiased => Estimator::Unbiased,
                },
            },
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OICA: &str = r#"
task = "oica"
replications = 2
seed = 7
data.p = 2
data.d = 4
data.samples = 1000
train.batch = 64
train.iters = 10
"#;

    #[test]
    fn dotted_keys_parse() {
        let cfg = ExperimentConfig::from_toml(OICA).unwrap();
        assert_eq!(cfg.task, Some(Task::Oica));
        assert_eq!(cfg.data.p, Some(2));
        assert_eq!(cfg.train.batch, 64);
        assert_eq!(cfg.kernel.multipliers, DEFAULT_MULTIPLIERS.to_vec());
        cfg.validate(Task::Oica).unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(OICA).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml("train.batchsize = 3").unwrap_err();
        assert!(err.to_string().contains("batchsize"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let cfg = ExperimentConfig::from_toml("task = \"aggregated\"\ndata.n = 2\ndata.k = 2").unwrap();
        let err = cfg.validate(Task::Aggregated).unwrap_err();
        assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "data.l"), "{err}");
    }

    #[test]
    fn subsampled_series_shorter_than_batch() {
        let cfg = ExperimentConfig::from_toml(
            "task = \"subsampled\"\ndata.n = 2\ndata.k = 2\ndata.t = 100\ntrain.batch = 100",
        )
        .unwrap();
        let err = cfg.validate(Task::Subsampled).unwrap_err();
        assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "data.t"), "{err}");
    }

    #[test]
    fn task_conflict() {
        let cfg = ExperimentConfig::from_toml(OICA).unwrap();
        assert_eq!(cfg.resolve_task(None).unwrap(), Task::Oica);
        assert!(cfg.resolve_task(Some(Task::Subsampled)).is_err());
    }

    #[test]
    fn zero_replications_rejected() {
        let mut cfg = ExperimentConfig::from_toml(OICA).unwrap();
        cfg.replications = 0;
        let err = cfg.validate(Task::Oica).unwrap_err();
        assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "replications"));
    }

    #[test]
    fn lambda_defaults_depend_on_task() {
        let cfg = ExperimentConfig::from_toml(OICA).unwrap();
        assert_eq!(cfg.train_config(Task::Oica, 0).lambda, 0.0);
        assert_eq!(cfg.train_config(Task::MeasurementError, 0).lambda, 1e-3);
    }
}
