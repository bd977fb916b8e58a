//! The JSON configuration document shared by the CLI subcommands.
//!
//! Every field has a default; an empty `{}` reproduces the toy protocol.
//! Unset widths resolve to 10-10 hidden units with a 1-d code for the toy
//! data and 300-100 with a 20-d code otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Setting, SettingParams, ToyConfig};
use crate::error::{Error, Result};
use crate::models::{
    Architecture, DaeNoiseConfig, DistanceKind, LossClampConfig, ModelKind, ObjectiveConfig,
};
use crate::nn::AdamConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSourceKind {
    #[default]
    Toy,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSourceKind,
    /// Generator settings when `source` is `toy`. Twice the per-split counts,
    /// since half of the normals and known anomalies go to the test set.
    pub toy: ToyConfig,
    /// Dataset file when `source` is `csv`.
    pub path: Option<PathBuf>,
    /// Min-max scaling; defaults to off for toy data and on for CSV data.
    pub scale: Option<bool>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSourceKind::Toy,
            toy: ToyConfig {
                n_normal: 20_000,
                n_known: 20_000,
                n_unknown: 10_000,
                noise_std: crate::data::MOON_NOISE_STD,
            },
            path: None,
            scale: None,
        }
    }
}

impl DataSection {
    pub fn scaling(&self) -> bool {
        self.scale.unwrap_or(self.source == DataSourceKind::Csv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Models trained by `bench`; `train` uses the first one.
    pub kinds: Vec<ModelKind>,
    pub hidden: Option<Vec<usize>>,
    pub latent: Option<usize>,
    pub distance: DistanceKind,
    pub noise_std: f64,
    pub clamp: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kinds: ModelKind::ALL.to_vec(),
            hidden: None,
            latent: None,
            distance: DistanceKind::SquaredL2,
            noise_std: DaeNoiseConfig::default().noise_std,
            clamp: LossClampConfig::default().min_reconstruction_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            validation_fraction: t.validation_fraction,
            patience: t.patience,
            adam: t.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub setting: Setting,
    /// Share of normals and of known anomalies that go to training.
    pub train_fraction: f64,
    /// Unknown anomalies hidden among the training normals (setting 2).
    pub contaminants: usize,
    /// Training known anomalies kept (setting 3).
    pub known_cap: Option<usize>,
    /// Setting 3 sweep: one report per known-anomaly count.
    pub known_caps: Option<Vec<usize>>,
    pub runs: usize,
    pub base_seed: u64,
    /// Worker threads for `bench`; defaults to the available cores.
    pub workers: Option<usize>,
}

impl ExperimentSection {
    pub fn split_params(&self) -> SettingParams {
        SettingParams {
            setting: self.setting,
            train_fraction: self.train_fraction,
            contaminants: self.contaminants,
            known_cap: self.known_cap,
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let split = SettingParams::default();
        Self {
            setting: split.setting,
            train_fraction: split.train_fraction,
            contaminants: split.contaminants,
            known_cap: split.known_cap,
            known_caps: None,
            runs: 5,
            base_seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Fills the width defaults that depend on the data source.
    pub fn resolved(mut self) -> Self {
        let default_arch = match self.data.source {
            DataSourceKind::Toy => Architecture::toy(),
            DataSourceKind::Csv => Architecture::wide(),
        };
        self.model.hidden.get_or_insert(default_arch.hidden);
        self.model.latent.get_or_insert(default_arch.latent);
        self.data.scale.get_or_insert(self.data.scaling());
        self
    }

    pub fn architecture(&self) -> Architecture {
        let resolved = self.clone().resolved();
        Architecture {
            hidden: resolved.model.hidden.unwrap_or_default(),
            latent: resolved.model.latent.unwrap_or_default(),
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            distance: self.model.distance,
            noise: DaeNoiseConfig {
                noise_std: self.model.noise_std,
            },
            clamp: LossClampConfig {
                min_reconstruction_error: self.model.clamp,
            },
        }
    }

    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        TrainConfig {
            kind,
            architecture: self.architecture(),
            objective: self.objective(),
            adam: self.train.adam,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            validation_fraction: self.train.validation_fraction,
            patience: self.train.patience,
            seed,
        }
    }

    /// Checks everything that can be checked without touching the data.
    /// Messages name the offending field path.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        let inner = |e: Error| match e {
            Error::Config(msg) => msg,
            other => other.to_string(),
        };
        if self.data.source == DataSourceKind::Csv && self.data.path.is_none() {
            return fail("data.path", "required when data.source is csv".into());
        }
        if self.data.toy.noise_std.is_nan() || self.data.toy.noise_std < 0.0 {
            return fail("data.toy.noise_std", "must be >= 0".into());
        }
        if self.model.kinds.is_empty() {
            return fail("model.kinds", "at least one model kind is required".into());
        }
        if let Some(h) = &self.model.hidden {
            if h.contains(&0) {
                return fail("model.hidden", "widths must be positive".into());
            }
        }
        if self.model.latent == Some(0) {
            return fail("model.latent", "must be positive".into());
        }
        if self.experiment.runs == 0 {
            return fail("experiment.runs", "must be >= 1".into());
        }
        let ef = self.experiment.train_fraction;
        if !(ef > 0.0 && ef < 1.0) {
            return fail("experiment.train_fraction", format!("must lie in (0, 1), got {ef}"));
        }
        if self.experiment.workers == Some(0) {
            return fail("experiment.workers", "must be >= 1".into());
        }
        self.objective()
            .validate()
            .or_else(|e| fail("model", inner(e)))?;
        self.train_config(self.model.kinds[0], 0)
            .validate()
            .or_else(|e| fail("train", inner(e)))
    }
}
