use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ClassifierConfig;
use crate::data::{load_csv, load_idx_pairs, LabeledDataset};
use crate::error::{Error, Result};
use crate::losses::Hyperparameters;
use crate::synthetic::{generate, SyntheticSpec};
use crate::training::{AdamConfig, BatchSize, CheckpointFormat};

/// Where the samples come from. Relative paths are resolved against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Idx {
        files: Vec<IdxFiles>,
    },
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdxFiles {
    pub images: PathBuf,
    pub labels: PathBuf,
}

impl DatasetSpec {
    pub fn is_labeled(&self) -> bool {
        !matches!(self, DatasetSpec::Csv { label_column: None, .. })
    }

    /// Re-seeds a synthetic draw; file-backed data is left alone.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let DatasetSpec::Synthetic(spec) = &mut self {
            spec.seed = seed;
        }
        self
    }

    pub fn check(&self) -> Result<()> {
        match self {
            DatasetSpec::Synthetic(spec) => spec.validate(),
            DatasetSpec::Idx { files } if files.is_empty() => Err(Error::Config("idx dataset lists no files".into())),
            _ => Ok(()),
        }
    }

    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSpec::Synthetic(spec) => Ok(generate(spec)?.0),
            DatasetSpec::Idx { files } => {
                let pairs: Vec<(&Path, &Path)> =
                    files.iter().map(|f| (f.images.as_path(), f.labels.as_path())).collect();
                load_idx_pairs(&pairs)
            }
            DatasetSpec::Csv { path, label_column } => load_csv(path, label_column.as_deref()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// `σ_d²/18` rising linearly to `σ_d²/2`, with `σ_d²` the `d`-th
    /// eigenvalue of `(1/n) X Xᵀ` on the train split.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PairedCos,
    MaxCos,
    MeanAngleDeg,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::PairedCos => "paired_cos",
            Metric::MaxCos => "max_cos",
            Metric::MeanAngleDeg => "mean_angle_deg",
        }
    }
}

fn default_split() -> (f64, f64, f64) {
    (0.7, 0.1, 0.2)
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::PairedCos, Metric::MaxCos, Metric::MeanAngleDeg]
}

fn default_checkpoint() -> CheckpointFormat {
    CheckpointFormat::Binary
}

/// One linear training run, or a panel of runs when `methods` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    /// Loss id used by `train`, e.g. `fp_mrl` or `fisher_s_mrl`.
    pub loss: String,
    /// Loss ids run side by side by `reproduce`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub hyper: Hyperparameters,
    /// Fills `hyper.lambdas` from the data when they are not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_schedule: Option<LambdaSchedule>,
    pub d: usize,
    pub batch_size: BatchSize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Defaults to on for `fp_mrl` and off otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthonormal_decoder: Option<bool>,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_checkpoint")]
    pub checkpoint: CheckpointFormat,
    #[serde(default)]
    pub seed: u64,
}

/// Two-model classification protocol on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyExperiment {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    pub classifier: ClassifierConfig,
}

/// Shared by both config kinds: one seed drives the data draw, the split
/// and training.
pub trait Seeded: Sized {
    fn reseed(self, seed: u64) -> Self;
}

impl Seeded for ExperimentConfig {
    fn reseed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset = self.dataset.with_seed(seed);
        self
    }
}

impl Seeded for ClassifyExperiment {
    fn reseed(mut self, seed: u64) -> Self {
        self.classifier.seed = seed;
        self.dataset = self.dataset.with_seed(seed);
        self
    }
}

pub(crate) fn check_split(f: (f64, f64, f64)) -> Result<()> {
    let v = [f.0, f.1, f.2];
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 || f.0 <= 0.0 {
        return Err(Error::Config(format!(
            "split fractions {v:?} must be non-negative, sum to 1 and give the train split a share"
        )));
    }
    Ok(())
}

impl ClassifyExperiment {
    pub fn check(&self) -> Result<()> {
        self.dataset.check()?;
        check_split(self.split)?;
        if !self.dataset.is_labeled() {
            return Err(Error::Config("classification needs a labeled dataset".into()));
        }
        let c = &self.classifier;
        if c.d == 0 || c.hidden.0 == 0 || c.hidden.1 == 0 {
            return Err(Error::Config("classifier widths must be positive".into()));
        }
        if c.batch_size == 0 || c.max_epochs == 0 || c.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", c.dropout)));
        }
        if !(c.alpha > 0.0) {
            return Err(Error::Config(format!("MD-ℓ1 α must be positive, got {}", c.alpha)));
        }
        Ok(())
    }
}

/// Lowercase hex SHA-256 of the compact JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Baked-in presets mirroring the per-dataset training table.
const LINEAR_PRESETS: &[(&str, &str)] = &[
    ("synthetic-mse", include_str!("../../presets/synthetic-mse.json")),
    ("synthetic-fisher", include_str!("../../presets/synthetic-fisher.json")),
    ("fashion-mse", include_str!("../../presets/fashion-mse.json")),
    ("fashion-fisher", include_str!("../../presets/fashion-fisher.json")),
];

const CLASSIFY_PRESETS: &[(&str, &str)] = &[
    (
        "synthetic-classify",
        include_str!("../../presets/synthetic-classify.json"),
    ),
    ("mnist-classify", include_str!("../../presets/mnist-classify.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    LINEAR_PRESETS.iter().chain(CLASSIFY_PRESETS).map(|(n, _)| *n).collect()
}

fn lookup<'a>(table: &'a [(&str, &str)], name: &str, kind: &str) -> Result<&'a str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let known: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("unknown {kind} preset {name:?}; known: {}", known.join(", ")))
    })
}

pub fn linear_preset(name: &str) -> Result<ExperimentConfig> {
    Ok(serde_json::from_str(lookup(LINEAR_PRESETS, name, "training")?)?)
}

pub fn classify_preset(name: &str) -> Result<ClassifyExperiment> {
    Ok(serde_json::from_str(lookup(CLASSIFY_PRESETS, name, "classification")?)?)
}

/// Generator settings for `synth --preset`: `default` is the 20-class
/// two-block draw, `classify` the same generator at 3500 samples per class.
pub fn synth_preset(name: &str) -> Result<SyntheticSpec> {
    match name {
        "default" => Ok(SyntheticSpec::default()),
        "classify" => Ok(SyntheticSpec {
            samples_per_class: 3500,
            ..SyntheticSpec::default()
        }),
        _ => Err(Error::Config(format!(
            "unknown synth preset {name:?}; known: default, classify"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in LINEAR_PRESETS {
            let cfg = linear_preset(name).unwrap();
            assert_eq!(&cfg.name, name);
            assert!(cfg.methods.contains(&cfg.loss));
        }
        for (name, _) in CLASSIFY_PRESETS {
            classify_preset(name).unwrap().check().unwrap();
        }
    }

    #[test]
    fn hash_changes_with_seed() {
        let a = linear_preset("synthetic-mse").unwrap();
        let b = a.clone().reseed(7);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a.clone()).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = include_str!("../../presets/synthetic-mse.json").replacen("\"d\"", "\"dim\"", 1);
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }
}
