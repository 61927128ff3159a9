//! Experiment harness: TSV datasets, few-shot runs over several seeds and
//! shot counts, λ0 selection, and result reporting.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod model;
pub mod report;

pub use config::{resolve_task, CorruptionConfig, HarnessConfig};
pub use dataset::{parse_dataset, read_dataset, read_task_dir, write_dataset};
pub use experiment::{run_experiment, run_one, weighting_for, ExperimentConfig, ExperimentInputs, Mode, RunOutput, RunRecord};
pub use model::{cache_dir, load_or_pretrain, pretrain, task_words, LoadedModel, CACHE_ENV};
pub use report::{render, result_lines, summarize, ResultLine, SummaryRow};
