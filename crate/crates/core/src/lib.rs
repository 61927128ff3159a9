//! Few-shot text classification with a discriminative language model used
//! as a semantic consistency scorer.
//!
//! For every candidate label the input is instantiated into a prompt that
//! contains the label's word. A replaced-token-detection head scores every
//! token of every prompt; the scores of the label word and of each input
//! sentence (IDF-weighted) become per-component distributions over labels,
//! which are mixed with weights λ into the final prediction. Training uses
//! the λ-weighted sum of per-component cross-entropies.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to one of them.

pub mod error;
pub mod fewshot;
pub mod idf;
pub mod metrics;
pub mod prompt;
pub mod scalar;
pub mod scoring;
pub mod task;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
pub use fewshot::{sample_few_shot, DEFAULT_SEEDS};
pub use idf::{compute_idf, compute_idf_from_examples, token_weights, IdfTable};
pub use metrics::{accuracy, binary_f1, evaluate, reject_report, RejectReport};
pub use prompt::{build_prompts, truncate, BuiltPrompt, Component, ComponentSpan, DEFAULT_MAX_LEN};
pub use scalar::Scalar;
pub use scoring::{
    aggregate_sc, label_word_consistency, reject_filter, subsequence_consistency, Classifier, ComponentDistribution,
    LambdaWeights, PredictionResult, PromptLayout, RejectPartition, Scorer, TokenWeighting,
};
pub use task::{
    builtin_task, builtin_tasks, validate_task, InputExample, Label, Metric, TaskKind, TaskSpec, Template,
    ValidationReport, Verbalizer,
};
pub use tokenizer::{Tokenizer, WordPieceTokenizer, WordTokenizer};
pub use train::{Checkpoint, TrainConfig, TrainableScorer};

pub type IdfTableF64 = IdfTable<f64>;
pub type IdfTableF32 = IdfTable<f32>;
pub type ClassifierF64 = Classifier<f64>;
pub type ClassifierF32 = Classifier<f32>;
pub type PredictionF64 = PredictionResult<f64>;
pub type PredictionF32 = PredictionResult<f32>;
pub type LambdaF64 = LambdaWeights<f64>;
pub type LambdaF32 = LambdaWeights<f32>;
pub type CheckpointF64 = Checkpoint<f64>;
pub type CheckpointF32 = Checkpoint<f32>;
