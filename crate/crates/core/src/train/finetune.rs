use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::loss::example_loss_and_grad;
use super::optim::{AdamW, LinearSchedule};
use super::TrainableScorer;
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::scalar::Scalar;
use crate::scoring::{Classifier, Scorer};
use crate::task::InputExample;

/// Dropout draws come from a stream separate from the shuffle order.
const DROPOUT_STREAM: u64 = 0x5eed_d80f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Examples per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Dev evaluation period in steps; the dev set is also scored at the end
    /// of every epoch.
    pub eval_every: usize,
    pub warmup_ratio: f64,
    /// Evaluations without improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 2,
            epochs: 15,
            eval_every: 50,
            warmup_ratio: 0.05,
            early_stop_patience: 10,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 || self.early_stop_patience == 0 {
            return bad("batch_size, epochs, eval_every and early_stop_patience must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must be in [0, 1)");
        }
        Ok(())
    }

    pub fn total_steps(&self, train_size: usize) -> usize {
        self.epochs * train_size.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub dev_metric: f64,
    /// Mean training loss since the previous evaluation.
    pub train_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome<T> {
    pub best: Checkpoint<T>,
    pub trace: Vec<EvalPoint>,
    pub steps_run: usize,
    pub stopped_early: bool,
}

/// Task metric of the scorer's predictions on labelled examples.
pub fn evaluate_examples<T: Scalar, S: Scorer<T> + ?Sized>(
    classifier: &Classifier<T>,
    scorer: &S,
    examples: &[InputExample],
) -> Result<f64> {
    let mut predictions = Vec::with_capacity(examples.len());
    let mut golds = Vec::with_capacity(examples.len());
    for ex in examples {
        let gold = ex
            .gold
            .ok_or_else(|| Error::InvalidExample("evaluation example has no gold label".into()))?;
        predictions.push(classifier.predict(ex, scorer)?.predicted);
        golds.push(gold);
    }
    evaluate(&predictions, &golds, classifier.spec.metric, classifier.spec.positive_label)
}

/// AdamW finetuning with a linear warmup/decay schedule, periodic dev
/// evaluation, best-checkpoint selection and early stopping.
///
/// The dev set is scored once before the first update, so the initial
/// parameters are a candidate checkpoint. On return the scorer holds the
/// best checkpoint's parameters.
pub fn finetune<T: Scalar, S: TrainableScorer<T>>(
    train: &[InputExample],
    dev: &[InputExample],
    classifier: &Classifier<T>,
    scorer: &mut S,
    config: &TrainConfig,
) -> Result<FinetuneOutcome<T>> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config("train and dev sets must be non-empty".into()));
    }
    let total_steps = config.total_steps(train.len());
    let schedule = LinearSchedule::new(config.learning_rate, config.warmup_ratio, total_steps);
    let mut optimizer = AdamW::new(
        scorer.parameters().len(),
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_STREAM);

    let initial = evaluate_examples(classifier, &*scorer, dev)?;
    let mut best = Checkpoint {
        params: scorer.parameters().to_vec(),
        step: 0,
        dev_metric: initial,
        lambda: classifier.lambda.as_vec(),
    };
    let mut trace = vec![EvalPoint {
        step: 0,
        dev_metric: initial,
        train_loss: None,
    }];
    let mut since_best = 0;
    let mut step = 0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut grads = vec![T::zero(); scorer.parameters().len()];
    let mut order: Vec<usize> = (0..train.len()).collect();

    'epochs: for _epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            grads.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of_usize(batch.len());
            for &i in batch.iter() {
                let loss =
                    example_loss_and_grad(&train[i], classifier, &*scorer, Some(&mut dropout_rng), scale, &mut grads)?;
                let total = loss.total.as_f64();
                if !total.is_finite() {
                    return Err(Error::Diverged(step));
                }
                loss_sum += total;
                loss_count += 1;
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(step));
            }
            optimizer.step(scorer.parameters_mut(), &grads, schedule.lr(step));
            step += 1;

            let epoch_end = b + 1 == batches.len();
            if step % config.eval_every == 0 || epoch_end {
                let metric = evaluate_examples(classifier, &*scorer, dev)?;
                trace.push(EvalPoint {
                    step,
                    dev_metric: metric,
                    train_loss: Some(loss_sum / loss_count.max(1) as f64),
                });
                loss_sum = 0.0;
                loss_count = 0;
                if metric > best.dev_metric {
                    best = Checkpoint {
                        params: scorer.parameters().to_vec(),
                        step,
                        dev_metric: metric,
                        lambda: classifier.lambda.as_vec(),
                    };
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= config.early_stop_patience {
                        break 'epochs;
                    }
                }
            }
        }
    }
    let stopped_early = step < total_steps;
    scorer.parameters_mut().copy_from_slice(&best.params);
    Ok(FinetuneOutcome {
        best,
        trace,
        steps_run: step,
        stopped_early,
    })
}

/// `{0, 1/30, ..., 1}`.
pub fn lambda0_grid<T: Scalar>() -> Vec<T> {
    (0..=30).map(|i| T::of_usize(i) / T::of(30.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda0: f64,
    pub dev_metric: f64,
    pub best_step: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<T> {
    pub lambda0: T,
    pub outcome: FinetuneOutcome<T>,
    pub points: Vec<GridPoint>,
}

/// Finetunes a fresh copy of `initial` for every grid value of λ0 and keeps
/// the one with the best dev metric, ties going to the smaller λ0.
pub fn grid_search_lambda0<T: Scalar, S: TrainableScorer<T>>(
    train: &[InputExample],
    dev: &[InputExample],
    classifier: &Classifier<T>,
    initial: &S,
    config: &TrainConfig,
    grid: &[T],
) -> Result<GridOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda0 grid".into()));
    }
    let runs: Vec<Result<(T, FinetuneOutcome<T>)>> = grid
        .par_iter()
        .map(|&lambda0| {
            let c = classifier.with_lambda0(lambda0)?;
            let mut scorer = initial.clone();
            finetune(train, dev, &c, &mut scorer, config).map(|o| (lambda0, o))
        })
        .collect();
    let mut points = Vec::with_capacity(runs.len());
    let mut best: Option<(T, FinetuneOutcome<T>)> = None;
    for run in runs {
        let (lambda0, outcome) = run?;
        points.push(GridPoint {
            lambda0: lambda0.as_f64(),
            dev_metric: outcome.best.dev_metric,
            best_step: outcome.best.step,
        });
        if best.as_ref().is_none_or(|(_, b)| outcome.best.dev_metric > b.best.dev_metric) {
            best = Some((lambda0, outcome));
        }
    }
    let (lambda0, outcome) = best.expect("grid is non-empty");
    Ok(GridOutcome {
        lambda0,
        outcome,
        points,
    })
}
