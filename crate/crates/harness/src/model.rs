//! Getting a scorer: load a saved toy discriminator, or pretrain one and
//! keep it in the cache directory.

use std::env;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use semscore::task::Segment;
use semscore::train::config_hash;
use semscore::{validate_task, TaskSpec, Tokenizer, TrainableScorer, WordTokenizer};
use semscore_toylm::{pretrain_rtd, EncoderConfig, RtdCorpusConfig, RtdTrace, RtdTrainConfig, ToyDiscriminator};

use crate::config::{CorruptionConfig, HarnessConfig};

pub const CACHE_ENV: &str = "SEMSCORE_CACHE";

/// `$SEMSCORE_CACHE`, or `.semscore-cache` in the working directory.
pub fn cache_dir() -> PathBuf {
    env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".semscore-cache"))
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ToyDiscriminator<f64>,
    pub tokenizer: WordTokenizer,
    /// Hash of the parameters and vocabulary; identifies the scorer in run
    /// records.
    pub id: String,
}

impl LoadedModel {
    fn new(model: ToyDiscriminator<f64>, tokenizer: WordTokenizer) -> Self {
        let bits: Vec<u64> = model.parameters().iter().map(|p| p.to_bits()).collect();
        let id = config_hash(&(bits, tokenizer.tokens()));
        Self { model, tokenizer, id }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (model, tokenizer) =
            ToyDiscriminator::load_dir(dir).with_context(|| format!("loading model from {}", dir.display()))?;
        Ok(Self::new(model, tokenizer))
    }

    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        self.model.save_dir(dir, &self.tokenizer, seed)?;
        Ok(())
    }

    /// Fails if a label word of `spec` is not a single known token.
    pub fn check_task(&self, spec: &TaskSpec) -> Result<()> {
        Ok(validate_task(spec, &self.tokenizer).into_result()?)
    }
}

/// Words a task needs in the vocabulary: template literals and label words.
pub fn task_words(spec: &TaskSpec) -> Vec<String> {
    let mut words: Vec<String> = spec
        .template
        .segments()
        .iter()
        .filter_map(|s| match s {
            Segment::Literal(text) => Some(text.clone()),
            _ => None,
        })
        .collect();
    words.extend(spec.verbalizer.words().iter().cloned());
    words
}

#[derive(Serialize)]
struct PretrainKey<'a> {
    corpus: &'a [String],
    extra: &'a [String],
    encoder: &'a EncoderConfig,
    pretrain: &'a RtdTrainConfig,
    corruption: &'a CorruptionConfig,
}

/// Builds a whole-word vocabulary from `corpus` plus `extra` texts and
/// pretrains a fresh discriminator on `corpus`.
pub fn pretrain(corpus: &[String], extra: &[String], config: &HarnessConfig) -> Result<(LoadedModel, RtdTrace)> {
    let tokenizer = WordTokenizer::from_texts(corpus.iter().chain(extra));
    let encoder = EncoderConfig {
        vocab_size: tokenizer.vocab_size(),
        ..config.encoder.clone()
    };
    let mut model = ToyDiscriminator::new(encoder)?;
    let rtd = RtdCorpusConfig {
        corpus: corpus.to_vec(),
        replacement_rate: config.corruption.replacement_rate,
        sampler: config.corruption.sampler,
    };
    let trace = pretrain_rtd(&mut model, &rtd, &tokenizer, &config.pretrain)?;
    Ok((LoadedModel::new(model, tokenizer), trace))
}

/// Returns the cached model for these inputs, pretraining and caching it on
/// a miss.
pub fn load_or_pretrain(corpus: &[String], extra: &[String], config: &HarnessConfig, cache: &Path) -> Result<LoadedModel> {
    let key = config_hash(&PretrainKey {
        corpus,
        extra,
        encoder: &config.encoder,
        pretrain: &config.pretrain,
        corruption: &config.corruption,
    });
    let dir = cache.join(format!("toy-{}", &key[..16]));
    if dir.join("model.bin").is_file() {
        return LoadedModel::load(&dir);
    }
    let (model, _) = pretrain(corpus, extra, config)?;
    model.save(&dir, config.pretrain.seed)?;
    Ok(model)
}
