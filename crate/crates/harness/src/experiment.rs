//! Multi-seed, multi-K few-shot runs with λ0 selection on the dev split.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semscore::train::{config_hash, finetune, grid_search_lambda0, lambda0_grid, GridPoint};
use semscore::{
    compute_idf_from_examples, reject_report, sample_few_shot, Classifier, InputExample, TaskSpec, TokenWeighting,
    Tokenizer, TrainConfig, TrainableScorer, DEFAULT_MAX_LEN, DEFAULT_SEEDS,
};

/// Which parts of the scoring rule are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Label word and IDF-weighted sentence components.
    Full,
    /// Sentence components use a plain mean over tokens.
    NoIdf,
    /// λ0 = 1: only the label word's logit.
    LabelOnly,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::NoIdf => "no-idf",
            Mode::LabelOnly => "label-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    pub mode: Mode,
    /// Fixed λ0; disables the grid search.
    pub lambda0: Option<f64>,
    /// Candidate λ0 values for the grid search.
    pub lambda0_grid: Vec<f64>,
    pub max_len: usize,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: DEFAULT_SEEDS.to_vec(),
            ks: vec![16],
            mode: Mode::Full,
            lambda0: None,
            lambda0_grid: lambda0_grid(),
            max_len: DEFAULT_MAX_LEN,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.ks.is_empty() {
            bail!("need at least one seed and one K");
        }
        if self.ks.contains(&0) {
            bail!("K must be positive");
        }
        if let Some(l) = self.lambda0 {
            if !(0.0..=1.0).contains(&l) {
                bail!("lambda0 = {l} is not in [0, 1]");
            }
        }
        if self.lambda0.is_none() && self.mode != Mode::LabelOnly && self.lambda0_grid.is_empty() {
            bail!("empty lambda0 grid");
        }
        self.train.validate()?;
        Ok(())
    }

    /// The fixed λ0 of this configuration, if the grid is skipped.
    pub fn fixed_lambda0(&self) -> Option<f64> {
        match self.mode {
            Mode::LabelOnly => Some(1.0),
            _ => self.lambda0,
        }
    }
}

/// Outcome of one (task, K, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
    pub lambda0: f64,
    /// Dev metric of every λ0 tried; empty when λ0 was fixed.
    pub grid: Vec<GridPoint>,
    pub best_step: usize,
    pub dev_metric: f64,
    pub metric: String,
    /// O.M: task metric on the whole test set.
    pub overall: f64,
    /// U.R: fraction of test examples on which all components agree.
    pub unanimous_ratio: f64,
    pub unanimous_count: usize,
    pub test_size: usize,
    /// U.M: metric on the unanimous subset.
    pub unanimous_metric: Option<f64>,
    /// D.M: metric on the disagreed subset.
    pub disagreed_metric: Option<f64>,
    pub config_hash: String,
    pub started_at: u64,
    pub finished_at: u64,
}

impl RunRecord {
    /// The record with both timestamps zeroed.
    pub fn without_timestamps(&self) -> Self {
        Self {
            started_at: 0,
            finished_at: 0,
            ..self.clone()
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Everything a run needs besides its configuration.
pub struct ExperimentInputs<'a, S> {
    pub spec: &'a TaskSpec,
    pub tokenizer: Arc<dyn Tokenizer>,
    /// The full training file: the few-shot pool and the IDF corpus.
    pub pool: &'a [InputExample],
    pub test: &'a [InputExample],
    /// Initial scorer; every finetune starts from a copy.
    pub scorer: &'a S,
    /// Identifies the scorer in the config hash.
    pub scorer_id: &'a str,
}

#[derive(Serialize)]
struct HashInput<'a> {
    task: String,
    config: &'a ExperimentConfig,
    scorer: &'a str,
}

/// Finetuned scorer of a run, for callers that keep checkpoints.
pub struct RunOutput<S> {
    pub record: RunRecord,
    pub scorer: S,
}

pub fn run_one<S: TrainableScorer<f64>>(
    inputs: &ExperimentInputs<'_, S>,
    config: &ExperimentConfig,
    k: usize,
    seed: u64,
    weighting: &TokenWeighting<f64>,
) -> Result<RunOutput<S>> {
    let started_at = now();
    let spec = inputs.spec;
    let hash = config_hash(&HashInput {
        task: spec.to_toml()?,
        config,
        scorer: inputs.scorer_id,
    });
    let (train, dev) = sample_few_shot(inputs.pool, spec.num_labels(), k, seed)
        .with_context(|| format!("sampling {k}-shot splits with seed {seed}"))?;
    let train_config = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let base = Classifier::new(
        spec.clone(),
        inputs.tokenizer.clone(),
        weighting.clone(),
        config.fixed_lambda0().unwrap_or(0.0),
        config.max_len,
    )?;
    let (classifier, scorer, outcome, grid) = match config.fixed_lambda0() {
        Some(_) => {
            let mut scorer = inputs.scorer.clone();
            let outcome = finetune(&train, &dev, &base, &mut scorer, &train_config)?;
            (base, scorer, outcome, Vec::new())
        }
        None => {
            let g = grid_search_lambda0(&train, &dev, &base, inputs.scorer, &train_config, &config.lambda0_grid)?;
            let mut scorer = inputs.scorer.clone();
            scorer.parameters_mut().copy_from_slice(&g.outcome.best.params);
            (base.with_lambda0(g.lambda0)?, scorer, g.outcome, g.points)
        }
    };
    let results = classifier.predict_all(inputs.test, &scorer)?;
    let golds: Vec<usize> = inputs
        .test
        .iter()
        .map(|e| e.gold.context("test example without a label"))
        .collect::<Result<_>>()?;
    let report = reject_report(&results, &golds, spec)?;
    Ok(RunOutput {
        record: RunRecord {
            task: spec.name.clone(),
            mode: config.mode,
            k,
            seed,
            lambda0: classifier.lambda.label_word,
            grid,
            best_step: outcome.best.step,
            dev_metric: outcome.best.dev_metric,
            metric: spec.metric.to_string(),
            overall: report.overall,
            unanimous_ratio: report.unanimous_ratio,
            unanimous_count: report.unanimous_count,
            test_size: report.total,
            unanimous_metric: report.unanimous_metric,
            disagreed_metric: report.disagreed_metric,
            config_hash: hash,
            started_at,
            finished_at: now(),
        },
        scorer,
    })
}

/// Token weighting for `mode`, with IDF computed over the whole pool.
pub fn weighting_for(mode: Mode, pool: &[InputExample]) -> Result<TokenWeighting<f64>> {
    Ok(match mode {
        Mode::Full => TokenWeighting::Idf(Arc::new(compute_idf_from_examples(pool)?)),
        Mode::NoIdf | Mode::LabelOnly => TokenWeighting::Uniform,
    })
}

/// Runs every (K, seed) pair in order. `on_run` sees each finished run, e.g.
/// to append it to a results file or save a checkpoint.
pub fn run_experiment<S: TrainableScorer<f64>>(
    inputs: &ExperimentInputs<'_, S>,
    config: &ExperimentConfig,
    mut on_run: impl FnMut(&RunOutput<S>) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let weighting = weighting_for(config.mode, inputs.pool)?;
    let mut records = Vec::new();
    for &k in &config.ks {
        for &seed in &config.seeds {
            let out = run_one(inputs, config, k, seed, &weighting)?;
            on_run(&out)?;
            records.push(out.record);
        }
    }
    Ok(records)
}

/// Directory for the finetuned model of a run.
pub fn checkpoint_path(dir: &std::path::Path, record: &RunRecord) -> PathBuf {
    let task: String = record
        .task
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    dir.join(format!("{task}-{}-k{}-seed{}", record.mode, record.k, record.seed))
}
