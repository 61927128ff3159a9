//! Semantic consistency scoring.
//!
//! A scorer emits one inconsistency logit `z` per prompt token (higher means
//! more likely replaced). Each prompt component (the label word, each input
//! sentence) yields a distribution over labels:
//!
//! * label word: `softmax_l(-z[v(l)] in prompt l)`, each label's logit read
//!   from its own prompt;
//! * sentence span: `softmax_l(-m_l)` with `m_l` the weighted mean of the
//!   span's logits in prompt `l`.
//!
//! The prompt score is the λ-mixture of those distributions and the
//! prediction is its argmax.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idf::{token_weights, IdfTable};
use crate::prompt::{build_prompts, BuiltPrompt, Component};
use crate::scalar::Scalar;
use crate::task::{InputExample, TaskKind, TaskSpec};
use crate::tokenizer::Tokenizer;

/// Total weight below which a span falls back to uniform token weights.
pub const MIN_WEIGHT_MASS: f64 = 1e-12;

/// A discriminative scorer in evaluation mode.
pub trait Scorer<T: Scalar> {
    /// One logit per token for every prompt.
    fn score(&self, prompts: &[&[u32]]) -> Result<Vec<Vec<T>>>;
}

impl<T: Scalar, S: Scorer<T> + ?Sized> Scorer<T> for &S {
    fn score(&self, prompts: &[&[u32]]) -> Result<Vec<Vec<T>>> {
        (**self).score(prompts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistribution<T> {
    pub component: Component,
    pub probs: Vec<T>,
    pub argmax: usize,
}

impl<T: Scalar> ComponentDistribution<T> {
    fn new(component: Component, probs: Vec<T>) -> Self {
        let argmax = argmax(&probs);
        Self {
            component,
            probs,
            argmax,
        }
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(-x)` with max subtraction.
pub fn softmax_neg<T: Scalar>(x: &[T]) -> Vec<T> {
    let lo = x.iter().copied().fold(T::infinity(), T::min);
    let e: Vec<T> = x.iter().map(|&v| (lo - v).exp()).collect();
    let sum: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Label-word component: prompt `l`'s logit at its own label position.
pub fn label_word_consistency<T: Scalar>(
    logits: &[Vec<T>],
    label_positions: &[usize],
) -> Result<ComponentDistribution<T>> {
    if logits.len() != label_positions.len() {
        return Err(Error::Shape(format!(
            "{} logit sequences for {} label positions",
            logits.len(),
            label_positions.len()
        )));
    }
    let z = logits
        .iter()
        .zip(label_positions)
        .map(|(seq, &p)| {
            seq.get(p).copied().ok_or(Error::PositionOutOfRange {
                position: p,
                len: seq.len(),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(ComponentDistribution::new(Component::LabelWord, softmax_neg(&z)))
}

/// Weighted mean of `seq` over `positions`; uniform weights when the total
/// weight is negligible.
pub(crate) fn weighted_mean<T: Scalar>(seq: &[T], positions: &[usize], weights: &[T]) -> Result<T> {
    let mass: T = weights.iter().copied().sum();
    let uniform = mass < T::of(MIN_WEIGHT_MASS);
    let mut acc = T::zero();
    for (&p, &w) in positions.iter().zip(weights) {
        let z = *seq.get(p).ok_or(Error::PositionOutOfRange {
            position: p,
            len: seq.len(),
        })?;
        acc += if uniform { z } else { w * z };
    }
    Ok(if uniform {
        acc / T::of_usize(positions.len())
    } else {
        acc / mass
    })
}

/// Effective per-token weights after the zero-mass fallback, normalized to
/// sum to one.
pub(crate) fn normalized_weights<T: Scalar>(weights: &[T]) -> Vec<T> {
    let mass: T = weights.iter().copied().sum();
    if mass < T::of(MIN_WEIGHT_MASS) {
        let u = T::one() / T::of_usize(weights.len());
        vec![u; weights.len()]
    } else {
        weights.iter().map(|&w| w / mass).collect()
    }
}

/// Sentence component: the same span read in every prompt, tokens weighted
/// by `weights`.
pub fn subsequence_consistency<T: Scalar>(
    component: Component,
    logits: &[Vec<T>],
    positions: &[usize],
    weights: &[T],
) -> Result<ComponentDistribution<T>> {
    if positions.is_empty() {
        return Err(Error::EmptySpan);
    }
    if weights.len() != positions.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} positions",
            weights.len(),
            positions.len()
        )));
    }
    let means = logits
        .iter()
        .map(|seq| weighted_mean(seq, positions, weights))
        .collect::<Result<Vec<T>>>()?;
    Ok(ComponentDistribution::new(component, softmax_neg(&means)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights<T> {
    pub label_word: T,
    pub sentence1: T,
    pub sentence2: Option<T>,
}

impl<T: Scalar> LambdaWeights<T> {
    /// `λ1 = 1 - λ0` for single sentences, `λ1 = λ2 = (1 - λ0) / 2` for pairs.
    pub fn new(kind: TaskKind, lambda0: T) -> Result<Self> {
        if !(lambda0 >= T::zero() && lambda0 <= T::one()) {
            return Err(Error::InvalidLambda(format!("lambda0 = {lambda0} not in [0, 1]")));
        }
        let rest = T::one() - lambda0;
        Ok(match kind {
            TaskKind::SingleSentence => Self {
                label_word: lambda0,
                sentence1: rest,
                sentence2: None,
            },
            TaskKind::SentencePair => {
                let half = rest / T::of(2.0);
                Self {
                    label_word: lambda0,
                    sentence1: half,
                    sentence2: Some(half),
                }
            }
        })
    }

    pub fn lambda0(&self) -> T {
        self.label_word
    }

    /// Weights in component order: label word, sentence 1, sentence 2.
    pub fn as_vec(&self) -> Vec<T> {
        let mut v = vec![self.label_word, self.sentence1];
        v.extend(self.sentence2);
        v
    }

    pub fn weight(&self, component: Component) -> T {
        match component {
            Component::LabelWord => self.label_word,
            Component::Sentence1 => self.sentence1,
            Component::Sentence2 => self.sentence2.unwrap_or_else(T::zero),
        }
    }
}

/// λ-mixture of the component distributions.
pub fn aggregate_sc<T: Scalar>(components: &[ComponentDistribution<T>], lambda: &LambdaWeights<T>) -> Result<Vec<T>> {
    let arity = lambda.as_vec().len();
    if components.len() != arity {
        return Err(Error::Shape(format!(
            "{} components for {} lambda weights",
            components.len(),
            arity
        )));
    }
    let n = components[0].probs.len();
    let mut sc = vec![T::zero(); n];
    for c in components {
        if c.probs.len() != n {
            return Err(Error::Shape("component distributions over different label sets".into()));
        }
        let w = lambda.weight(c.component);
        for (acc, &p) in sc.iter_mut().zip(&c.probs) {
            *acc += w * p;
        }
    }
    Ok(sc)
}

/// Per-token weighting of sentence spans.
#[derive(Debug, Clone)]
pub enum TokenWeighting<T> {
    Idf(Arc<IdfTable<T>>),
    Uniform,
}

/// Which positions feed which component, with the sentence token weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptLayout<T> {
    pub label_positions: Vec<usize>,
    /// Sentence spans in order, each with per-token weights.
    pub sentences: Vec<(Component, Vec<usize>, Vec<T>)>,
}

impl<T: Scalar> PromptLayout<T> {
    pub fn new(prompts: &[BuiltPrompt], weighting: &TokenWeighting<T>) -> Result<Self> {
        let first = prompts.first().ok_or_else(|| Error::Shape("no prompts".into()))?;
        let sentences = first
            .spans
            .iter()
            .filter(|s| s.component != Component::LabelWord)
            .map(|span| {
                let weights = match weighting {
                    TokenWeighting::Idf(table) => token_weights(first, span, table)?,
                    TokenWeighting::Uniform => vec![T::one(); span.positions.len()],
                };
                Ok((span.component, span.positions.clone(), weights))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            label_positions: prompts.iter().map(BuiltPrompt::label_position).collect(),
            sentences,
        })
    }

    /// Label word distribution followed by one distribution per sentence.
    pub fn distributions(&self, logits: &[Vec<T>]) -> Result<Vec<ComponentDistribution<T>>> {
        let mut out = vec![label_word_consistency(logits, &self.label_positions)?];
        for (component, positions, weights) in &self.sentences {
            out.push(subsequence_consistency(*component, logits, positions, weights)?);
        }
        Ok(out)
    }
}

pub(crate) fn check_finite<T: Scalar>(logits: &[Vec<T>]) -> Result<()> {
    for (prompt, seq) in logits.iter().enumerate() {
        if let Some(position) = seq.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFiniteLogit { prompt, position });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult<T> {
    pub predicted: usize,
    pub sc: Vec<T>,
    pub components: Vec<ComponentDistribution<T>>,
    /// Every component's argmax agrees.
    pub unanimous: bool,
}

impl<T: Scalar> PredictionResult<T> {
    pub fn from_components(components: Vec<ComponentDistribution<T>>, lambda: &LambdaWeights<T>) -> Result<Self> {
        let sc = aggregate_sc(&components, lambda)?;
        let unanimous = components.windows(2).all(|w| w[0].argmax == w[1].argmax);
        Ok(Self {
            predicted: argmax(&sc),
            sc,
            components,
            unanimous,
        })
    }
}

/// Everything needed to turn an example into a prediction, apart from the
/// scorer itself.
#[derive(Clone)]
pub struct Classifier<T> {
    pub spec: TaskSpec,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub weighting: TokenWeighting<T>,
    pub lambda: LambdaWeights<T>,
    pub max_len: usize,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(
        spec: TaskSpec,
        tokenizer: Arc<dyn Tokenizer>,
        weighting: TokenWeighting<T>,
        lambda0: T,
        max_len: usize,
    ) -> Result<Self> {
        let lambda = LambdaWeights::new(spec.kind(), lambda0)?;
        Ok(Self {
            spec,
            tokenizer,
            weighting,
            lambda,
            max_len,
        })
    }

    pub fn with_lambda0(&self, lambda0: T) -> Result<Self> {
        let mut c = self.clone();
        c.lambda = LambdaWeights::new(self.spec.kind(), lambda0)?;
        Ok(c)
    }

    pub fn prompts(&self, example: &InputExample) -> Result<(Vec<BuiltPrompt>, PromptLayout<T>)> {
        let prompts = build_prompts(example, &self.spec, self.tokenizer.as_ref(), self.max_len)?;
        let layout = PromptLayout::new(&prompts, &self.weighting)?;
        Ok((prompts, layout))
    }

    pub fn predict<S: Scorer<T> + ?Sized>(&self, example: &InputExample, scorer: &S) -> Result<PredictionResult<T>> {
        let (prompts, layout) = self.prompts(example)?;
        let ids: Vec<&[u32]> = prompts.iter().map(|p| p.token_ids.as_slice()).collect();
        let logits = scorer.score(&ids)?;
        if logits.len() != prompts.len() || logits.iter().zip(&prompts).any(|(z, p)| z.len() != p.len()) {
            return Err(Error::Scorer("logit shape does not match prompts".into()));
        }
        check_finite(&logits)?;
        PredictionResult::from_components(layout.distributions(&logits)?, &self.lambda)
    }

    pub fn predict_all<S: Scorer<T> + ?Sized>(
        &self,
        examples: &[InputExample],
        scorer: &S,
    ) -> Result<Vec<PredictionResult<T>>> {
        examples.iter().map(|ex| self.predict(ex, scorer)).collect()
    }
}

/// Indices of unanimous and disagreed predictions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectPartition {
    pub unanimous: Vec<usize>,
    pub disagreed: Vec<usize>,
}

impl RejectPartition {
    pub fn unanimous_ratio(&self) -> f64 {
        let n = self.unanimous.len() + self.disagreed.len();
        if n == 0 {
            0.0
        } else {
            self.unanimous.len() as f64 / n as f64
        }
    }
}

/// Splits predictions into the ones every component agrees on, and the
/// ones a qualitative reject option would refuse.
pub fn reject_filter<T>(results: &[PredictionResult<T>]) -> RejectPartition {
    let (unanimous, disagreed) = (0..results.len()).partition(|&i| results[i].unanimous);
    RejectPartition { unanimous, disagreed }
}
