use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semscore::{builtin_task, builtin_tasks, TaskSpec, TrainConfig, DEFAULT_MAX_LEN};
use semscore_toylm::{EncoderConfig, ReplacementSampler, RtdTrainConfig};

/// Settings file for the CLI (TOML). Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub max_len: usize,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub pretrain: RtdTrainConfig,
    pub corruption: CorruptionConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            train: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            pretrain: RtdTrainConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub replacement_rate: f64,
    pub sampler: ReplacementSampler,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            replacement_rate: 0.15,
            sampler: ReplacementSampler::UniformVocab,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Settings sized for the synthetic task: a narrow encoder, 6000
    /// pretraining steps, and a finetuning rate to match the small model.
    pub fn toy() -> Self {
        Self {
            max_len: 64,
            train: TrainConfig {
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            encoder: EncoderConfig {
                embedding_dim: 32,
                layers: 2,
                heads: 4,
                ffn_dim: 64,
                max_positions: 64,
                ..EncoderConfig::default()
            },
            pretrain: RtdTrainConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// A built-in task name (case-insensitive) or the path of a task TOML file.
pub fn resolve_task(name_or_path: &str) -> Result<TaskSpec> {
    let path = Path::new(name_or_path);
    if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(TaskSpec::from_toml(&text)?);
    }
    match builtin_task(name_or_path) {
        Some(spec) => Ok(spec),
        None => {
            let names: Vec<String> = builtin_tasks().into_iter().map(|t| t.name).collect();
            bail!("unknown task {name_or_path:?}; built-in tasks: {}", names.join(", "))
        }
    }
}
