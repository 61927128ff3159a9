//! A generated two-class sentiment task with a closed vocabulary.
//!
//! Sentences are one to three clauses of the form `the <subject> <verb>
//! [adverb] <adjective>` joined by connectives. Every adjective carries a
//! polarity and the majority of clause polarities is the sentence polarity.
//! A small fraction of examples has its sentence polarity flipped relative to
//! the gold label, which caps the Bayes accuracy just below one.
//!
//! The unlabelled pretraining corpus uses the same grammar but never mixes
//! polarities within a sentence, by default ends every sentence with
//! `it is great .` or `it is terrible .`, and lets the label words stand in
//! for adjectives. It is
//! deliberately skewed towards positive sentences: with a uniform replacement
//! sampler the rarer polarity is then more often a replacement, which gives
//! the embeddings a polarity direction early in pretraining. Balanced corpora
//! leave the replaced-token objective symmetric in polarity and the model
//! takes far longer to pick up agreement between sentiment words.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semscore::{sample_few_shot, InputExample, Metric, Result, TaskSpec, WordTokenizer};

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

const SUBJECTS: &[&str] = &["movie", "plot", "acting", "story", "music", "ending"];
const VERBS: &[&str] = &["was", "felt", "seemed"];
const ADVERBS: &[&str] = &["very", "really", "quite"];
const POSITIVE_WORDS: &[&str] = &[
    "good", "wonderful", "brilliant", "charming", "superb", "fun", "delightful", "moving", "clever", "beautiful", "fresh",
    "gripping", "lovely", "excellent", "stunning", "witty", "touching", "elegant", "vivid", "powerful", "smart", "warm",
    "hilarious", "inspired",
];
const NEGATIVE_WORDS: &[&str] = &[
    "bad", "awful", "boring", "dull", "weak", "poor", "tedious", "clumsy", "bland", "dreadful", "stale", "messy", "lame",
    "silly", "shallow", "tiresome", "flat", "sloppy", "painful", "hollow", "cheap", "forced", "lifeless", "annoying",
];
const CONNECTIVES: &[&str] = &["and", "but", "while"];

/// Template, label words and suffix literals of the task.
const TEMPLATE: &str = "<S1> It is <V> .";
const LABEL_WORDS: [&str; 2] = ["terrible", "great"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Seed of the example pool, test set and pretraining corpus.
    pub data_seed: u64,
    pub pool_size: usize,
    pub test_size: usize,
    pub corpus_size: usize,
    /// Probability that an example's text has the opposite polarity of its
    /// gold label.
    pub label_noise: f64,
    /// Fraction of corpus sentences followed by `it is great .` or
    /// `it is terrible .` matching their polarity.
    pub corpus_suffix_rate: f64,
    /// Inclusive clause-count range of corpus sentences.
    pub corpus_clauses: (usize, usize),
    /// Probability that a corpus adjective is the label word of its polarity.
    pub corpus_label_word_rate: f64,
    /// Fraction of positive corpus sentences.
    pub corpus_positive_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            data_seed: 0,
            pool_size: 1000,
            test_size: 1000,
            corpus_size: 5000,
            label_noise: 0.02,
            corpus_suffix_rate: 1.0,
            corpus_clauses: (1, 3),
            corpus_label_word_rate: 0.3,
            corpus_positive_rate: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub spec: TaskSpec,
    pub pool: Vec<InputExample>,
    pub test: Vec<InputExample>,
    pub corpus: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplits {
    pub spec: TaskSpec,
    pub train: Vec<InputExample>,
    pub dev: Vec<InputExample>,
    pub test: Vec<InputExample>,
    pub corpus: Vec<String>,
}

pub fn synthetic_spec() -> TaskSpec {
    TaskSpec::new(
        "synthetic",
        TEMPLATE,
        &[("negative", LABEL_WORDS[0]), ("positive", LABEL_WORDS[1])],
        Metric::Accuracy,
        None,
    )
    .expect("built-in template parses")
}

/// Whole-word tokenizer covering every word the generator can emit.
pub fn synthetic_tokenizer() -> WordTokenizer {
    let lexicon = [SUBJECTS, VERBS, ADVERBS, POSITIVE_WORDS, NEGATIVE_WORDS, CONNECTIVES, &LABEL_WORDS[..]].concat();
    WordTokenizer::from_texts(lexicon.into_iter().chain(["the it is ."]))
}

fn adjective(polarity: usize, label_word_rate: f64, rng: &mut ChaCha8Rng) -> &'static str {
    if label_word_rate > 0.0 && rng.random_bool(label_word_rate) {
        return LABEL_WORDS[polarity];
    }
    let adjectives = if polarity == POSITIVE { POSITIVE_WORDS } else { NEGATIVE_WORDS };
    adjectives.choose(rng).unwrap()
}

fn clause(polarity: usize, label_word_rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut words = vec!["the", SUBJECTS.choose(rng).unwrap(), VERBS.choose(rng).unwrap()];
    if rng.random_bool(0.4) {
        words.push(ADVERBS.choose(rng).unwrap());
    }
    words.push(adjective(polarity, label_word_rate, rng));
    words.join(" ")
}

/// A sentence whose clause-majority polarity is `polarity`.
fn sentence(polarity: usize, clauses: usize, mixed: bool, label_word_rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut polarities = vec![polarity; clauses];
    if mixed && clauses == 3 && rng.random_bool(0.5) {
        polarities[0] = 1 - polarity;
        polarities.shuffle(rng);
    }
    let mut text = clause(polarities[0], label_word_rate, rng);
    for &p in &polarities[1..] {
        text.push(' ');
        text.push_str(CONNECTIVES.choose(rng).unwrap());
        text.push(' ');
        text.push_str(&clause(p, label_word_rate, rng));
    }
    text
}

fn examples(n: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<InputExample> {
    (0..n)
        .map(|i| {
            let gold = i % 2;
            let polarity = if rng.random_bool(noise) { 1 - gold } else { gold };
            let clauses = rng.random_range(1..=3);
            InputExample::single(sentence(polarity, clauses, true, 0.0, rng), Some(gold))
        })
        .collect()
}

impl SyntheticData {
    pub fn generate(config: &SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed);
        let pool = examples(config.pool_size, config.label_noise, &mut rng);
        let test = examples(config.test_size, config.label_noise, &mut rng);
        let corpus = (0..config.corpus_size)
            .map(|_| {
                let polarity = if rng.random_bool(config.corpus_positive_rate) { POSITIVE } else { NEGATIVE };
                let clauses = rng.random_range(config.corpus_clauses.0..=config.corpus_clauses.1);
                let mut s = sentence(polarity, clauses, false, config.corpus_label_word_rate, &mut rng);
                if rng.random_bool(config.corpus_suffix_rate) {
                    s.push_str(" it is ");
                    s.push_str(LABEL_WORDS[polarity]);
                    s.push_str(" .");
                }
                s
            })
            .collect();
        Self {
            spec: synthetic_spec(),
            pool,
            test,
            corpus,
        }
    }

    /// K-shot train and dev sets drawn from the pool with `seed`.
    pub fn splits(&self, k: usize, seed: u64) -> Result<SyntheticSplits> {
        let (train, dev) = sample_few_shot(&self.pool, 2, k, seed)?;
        Ok(SyntheticSplits {
            spec: self.spec.clone(),
            train,
            dev,
            test: self.test.clone(),
            corpus: self.corpus.clone(),
        })
    }
}

/// Default-sized data generated from `seed`, split 16-shot with the same seed.
pub fn make_synthetic_task(seed: u64) -> SyntheticSplits {
    let data = SyntheticData::generate(&SyntheticConfig {
        data_seed: seed,
        ..SyntheticConfig::default()
    });
    data.splits(16, seed).expect("pool holds enough examples per class")
}
