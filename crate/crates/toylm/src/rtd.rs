//! Replaced-token-detection pretraining with random-sampler corruption.
//!
//! Each sentence is encoded as `[CLS] words [SEP]`; every word position is
//! independently replaced with probability `replacement_rate` by a token drawn
//! from the sampler, never equal to the original. The model learns a per-token
//! binary cross-entropy with "replaced" as the positive class, so a high logit
//! means "this token does not fit here".

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use semscore::train::{AdamW, LinearSchedule};
use semscore::{Error, Result, Scalar, Tokenizer, TrainableScorer};

use crate::encoder::ToyDiscriminator;

/// Ids below this are special tokens and are never corrupted or sampled.
const FIRST_WORD_ID: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementSampler {
    UniformVocab,
    UnigramFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdCorpusConfig {
    pub corpus: Vec<String>,
    pub replacement_rate: f64,
    pub sampler: ReplacementSampler,
}

impl RtdCorpusConfig {
    pub fn new(corpus: Vec<String>) -> Self {
        Self {
            corpus,
            replacement_rate: 0.15,
            sampler: ReplacementSampler::UniformVocab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtdTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for RtdTrainConfig {
    fn default() -> Self {
        Self {
            steps: 6000,
            batch_size: 16,
            learning_rate: 1e-3,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

/// A corrupted sequence with one label per position (`true` = replaced).
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub ids: Vec<u32>,
    pub replaced: Vec<bool>,
}

/// Encoded corpus plus the replacement sampler.
#[derive(Debug, Clone)]
pub struct Corruptor {
    sequences: Vec<Vec<u32>>,
    rate: f64,
    candidates: Vec<u32>,
    weighted: Option<WeightedIndex<f64>>,
}

impl Corruptor {
    pub fn new(config: &RtdCorpusConfig, tokenizer: &dyn Tokenizer) -> Result<Self> {
        if config.corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !(config.replacement_rate > 0.0 && config.replacement_rate < 1.0) {
            return Err(Error::Config("replacement_rate must be in (0, 1)".into()));
        }
        let vocab = tokenizer.vocab_size() as u32;
        if vocab < FIRST_WORD_ID + 2 {
            return Err(Error::Config("need at least two non-special tokens to corrupt".into()));
        }
        let sequences: Vec<Vec<u32>> = config
            .corpus
            .iter()
            .map(|s| {
                let mut ids = vec![tokenizer.cls_id()];
                ids.extend(tokenizer.encode(s).ids);
                ids.push(tokenizer.sep_id());
                ids
            })
            .collect();
        let candidates: Vec<u32> = (FIRST_WORD_ID..vocab).collect();
        let weighted = match config.sampler {
            ReplacementSampler::UniformVocab => None,
            ReplacementSampler::UnigramFrequency => {
                let mut counts = vec![0.0f64; candidates.len()];
                for &id in sequences.iter().flatten() {
                    if id >= FIRST_WORD_ID {
                        counts[(id - FIRST_WORD_ID) as usize] += 1.0;
                    }
                }
                Some(WeightedIndex::new(&counts).map_err(|e| Error::Config(format!("unigram sampler: {e}")))?)
            }
        };
        Ok(Self {
            sequences,
            rate: config.replacement_rate,
            candidates,
            weighted,
        })
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        match &self.weighted {
            Some(w) => self.candidates[w.sample(rng)],
            None => self.candidates[rng.random_range(0..self.candidates.len())],
        }
    }

    /// Corrupts one sequence; `[CLS]`, `[SEP]` and other specials stay put.
    pub fn corrupt(&self, ids: &[u32], rng: &mut ChaCha8Rng) -> Corruption {
        let mut out = ids.to_vec();
        let mut replaced = vec![false; ids.len()];
        for (t, &id) in ids.iter().enumerate() {
            if id < FIRST_WORD_ID || rng.random::<f64>() >= self.rate {
                continue;
            }
            let mut r = self.draw(rng);
            while r == id {
                r = self.draw(rng);
            }
            out[t] = r;
            replaced[t] = true;
        }
        Corruption { ids: out, replaced }
    }
}

/// Mean per-token BCE of one corrupted sequence; adds `scale * dLoss/dθ`
/// into `grads`.
pub fn rtd_loss_and_grad<T: Scalar>(
    model: &ToyDiscriminator<T>,
    c: &Corruption,
    dropout: Option<&mut ChaCha8Rng>,
    scale: T,
    grads: &mut [T],
) -> Result<T> {
    let (z, tape) = model.forward(&c.ids, dropout)?;
    let n = T::of_usize(z.len());
    let mut loss = T::zero();
    let mut dz = Vec::with_capacity(z.len());
    for (&zt, &y) in z.iter().zip(&c.replaced) {
        // log(1 + e^z) - y z, written to avoid overflow
        let softplus = zt.max(T::zero()) + (-zt.abs()).exp().ln_1p();
        let yt = if y { T::one() } else { T::zero() };
        loss += softplus - yt * zt;
        let sig = T::one() / (T::one() + (-zt).exp());
        dz.push((sig - yt) / n * scale);
    }
    model.backward_into(&tape, &dz, grads)?;
    Ok(loss / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdTrace {
    /// Mean loss of each optimizer step.
    pub losses: Vec<f64>,
}

/// Trains `model` in place on corrupted copies of the corpus.
pub fn pretrain_rtd<T: Scalar>(
    model: &mut ToyDiscriminator<T>,
    corpus: &RtdCorpusConfig,
    tokenizer: &dyn Tokenizer,
    config: &RtdTrainConfig,
) -> Result<RtdTrace> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let corruptor = Corruptor::new(corpus, tokenizer)?;
    let schedule = LinearSchedule::new(config.learning_rate, config.warmup_ratio, config.steps);
    let mut opt = AdamW::new(model.num_parameters(), 0.9, 0.999, 1e-8, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corruptor.sequences.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut grads = vec![T::zero(); model.num_parameters()];
    let mut losses = Vec::with_capacity(config.steps);
    let scale = T::one() / T::of_usize(config.batch_size);
    for step in 0..config.steps {
        grads.iter_mut().for_each(|g| *g = T::zero());
        let mut total = T::zero();
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let c = corruptor.corrupt(&corruptor.sequences[order[cursor]], &mut rng);
            cursor += 1;
            total += rtd_loss_and_grad(model, &c, Some(&mut rng), scale, &mut grads)?;
        }
        let mean = (total * scale).as_f64();
        if !mean.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(step));
        }
        losses.push(mean);
        opt.step(model.parameters_mut(), &grads, schedule.lr(step));
    }
    Ok(RtdTrace { losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdEval {
    pub mean_logit_replaced: f64,
    pub mean_logit_original: f64,
    /// Probability that a random replaced token outscores a random original
    /// one (ties count half).
    pub auc: f64,
    pub replaced_fraction: f64,
    pub tokens: usize,
}

/// Scores corrupted copies of held-out sentences. Specials are excluded.
pub fn rtd_eval<T: Scalar>(
    model: &ToyDiscriminator<T>,
    corpus: &RtdCorpusConfig,
    tokenizer: &dyn Tokenizer,
    seed: u64,
) -> Result<RtdEval> {
    let corruptor = Corruptor::new(corpus, tokenizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for seq in &corruptor.sequences {
        let c = corruptor.corrupt(seq, &mut rng);
        let (z, _) = model.forward(&c.ids, None)?;
        for ((&orig, &r), zt) in seq.iter().zip(&c.replaced).zip(z) {
            if orig < FIRST_WORD_ID {
                continue;
            }
            if r {
                pos.push(zt.as_f64());
            } else {
                neg.push(zt.as_f64());
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Config("held-out text yielded no replaced or no original tokens".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(RtdEval {
        mean_logit_replaced: mean(&pos),
        mean_logit_original: mean(&neg),
        auc: auc(&pos, &neg),
        replaced_fraction: pos.len() as f64 / (pos.len() + neg.len()) as f64,
        tokens: pos.len() + neg.len(),
    })
}

/// Mann-Whitney AUC with average ranks for ties.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&v| (v, true))
        .chain(negatives.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        rank_sum += avg_rank * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}
