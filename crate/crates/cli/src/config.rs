//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use fairlayout::baselines::AllocationBudget;
use fairlayout::citygrid::{generate_synthetic_city, load_dataset, Dataset, GeneratorConfig};
use fairlayout::denoiser::DenoiserConfig;
use fairlayout::fairdemand::PretrainConfig;
use fairlayout::metrics::EfficiencyMode;
use fairlayout::sampler::SamplerConfig;
use fairlayout::sde::ScheduleKind;
use fairlayout::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A dataset loaded from disk or synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<GeneratorConfig>,
}

impl DataSource {
    pub fn synthetic(config: GeneratorConfig) -> Self {
        Self {
            path: None,
            synth: Some(config),
        }
    }

    pub fn validate(&self, what: &str) -> Result<(), CliError> {
        match (&self.path, &self.synth) {
            (Some(_), Some(_)) => Err(CliError::Config(format!("{what}: give either path or synth, not both"))),
            (None, None) => Err(CliError::Config(format!("{what}: needs path or synth"))),
            (Some(p), None) if !p.exists() => {
                Err(CliError::Config(format!("{what}: dataset {} does not exist", p.display())))
            }
            (None, Some(g)) => g.validate().map_err(|e| match e {
                fairlayout::Error::Config(m) | fairlayout::Error::Validation(m) => {
                    CliError::Config(format!("{what}: {m}"))
                }
                other => CliError::Config(format!("{what}: {other}")),
            }),
            _ => Ok(()),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset, CliError> {
        match (&self.path, &self.synth) {
            (Some(p), _) => Ok(load_dataset(p)?),
            (None, Some(g)) => Ok(generate_synthetic_city(g, seed)?),
            (None, None) => Err(CliError::Config("dataset source is empty".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Regions the model is trained on.
    pub train: DataSource,
    /// Regions layouts are generated and scored for; the training set when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<DataSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub lr_decay: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: 1000,
            batch: t.batch,
            lr: t.lr,
            weight_decay: t.weight_decay,
            clip_norm: t.clip_norm,
            lr_decay: t.lr_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairDemandSection {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for FairDemandSection {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            hidden: 128,
            epochs: p.epochs,
            batch: p.batch,
            lr: p.lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub synth_train: u64,
    pub synth_eval: u64,
    pub fairdemand_init: u64,
    pub fairdemand_train: u64,
    pub model_init: u64,
    pub train: u64,
    pub sample: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            synth_train: 1,
            synth_eval: 2,
            fairdemand_init: 3,
            fairdemand_train: 4,
            model_init: 5,
            train: 6,
            sample: 7,
        }
    }
}

impl Seeds {
    /// Every seed shifted by `offset`, for repeated trials.
    pub fn offset(self, offset: u64) -> Self {
        let o = offset.wrapping_mul(1000);
        Self {
            synth_train: self.synth_train.wrapping_add(o),
            synth_eval: self.synth_eval.wrapping_add(o),
            fairdemand_init: self.fairdemand_init.wrapping_add(o),
            fairdemand_train: self.fairdemand_train.wrapping_add(o),
            model_init: self.model_init.wrapping_add(o),
            train: self.train.wrapping_add(o),
            sample: self.sample.wrapping_add(o),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub mode: EfficiencyMode,
    /// Run the DRF baseline alongside walking-based.
    pub drf: bool,
    /// DRF budget; one unit per category per region with a cap of `N_max`
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<AllocationBudget>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            mode: EfficiencyMode::Coverage,
            drf: true,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Seeds,
    pub schedule: ScheduleKind,
    pub data: DataConfig,
    pub denoiser: DenoiserConfig,
    pub training: TrainingSection,
    pub fairdemand: FairDemandSection,
    pub sampler: SamplerConfig,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: Seeds::default(),
            schedule: ScheduleKind::Cosine,
            data: DataConfig {
                train: DataSource::synthetic(GeneratorConfig::default()),
                eval: None,
            },
            denoiser: DenoiserConfig::default(),
            training: TrainingSection::default(),
            fairdemand: FairDemandSection::default(),
            sampler: SamplerConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 64 well-served training regions, 16 imbalanced held-out regions,
    /// a 32-wide denoiser and 200 epochs.
    Desk,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::desk(),
        }
    }

    pub fn desk() -> Self {
        let train = GeneratorConfig {
            regions: 64,
            n_max: 64,
            balance: 1.0,
            ..Default::default()
        };
        let eval = GeneratorConfig {
            regions: 16,
            balance: 0.3,
            ..train.clone()
        };
        Self {
            data: DataConfig {
                train: DataSource::synthetic(train),
                eval: Some(DataSource::synthetic(eval)),
            },
            denoiser: DenoiserConfig {
                d_hidden: 32,
                time_embed_dim: 32,
                ..Default::default()
            },
            training: TrainingSection {
                epochs: 200,
                ..Default::default()
            },
            fairdemand: FairDemandSection {
                hidden: 32,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.data.train.validate("data.train")?;
        if let Some(eval) = &self.data.eval {
            eval.validate("data.eval")?;
        }
        self.denoiser.validate()?;
        self.sampler.validate()?;
        let t = &self.training;
        if t.batch == 0 || self.fairdemand.batch == 0 {
            return Err(CliError::Config("batch sizes must be positive".into()));
        }
        if !(t.lr >= 0.0 && t.weight_decay >= 0.0 && t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            return Err(CliError::Config("training needs lr >= 0, weight_decay >= 0, lr_decay in (0, 1]".into()));
        }
        if self.fairdemand.hidden == 0 {
            return Err(CliError::Config("fairdemand.hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch: t.batch,
            lr: t.lr,
            weight_decay: t.weight_decay,
            clip_norm: t.clip_norm,
            lr_decay: t.lr_decay,
            seed: self.seeds.train,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.fairdemand.epochs,
            batch: self.fairdemand.batch,
            lr: self.fairdemand.lr,
            seed: self.seeds.fairdemand_train,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
