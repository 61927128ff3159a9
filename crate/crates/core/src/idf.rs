//! Normalized inverse document frequency.
//!
//! `raw(w) = ln(N / df(w))`, min-max normalized over the vocabulary into
//! `[0, 1]`. Words seen in every document get weight 0; unseen words get the
//! default weight 1.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::prompt::{BuiltPrompt, ComponentSpan};
use crate::scalar::Scalar;
use crate::task::InputExample;
use crate::tokenizer::words_of;

const HEADER_TAG: &str = "#idf";

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable<T> {
    weights: BTreeMap<String, T>,
    default_weight: T,
    corpus_size: usize,
}

impl<T: Scalar> IdfTable<T> {
    /// Weight of a (lowercased) word, or the default for unseen words.
    pub fn weight(&self, word: &str) -> T {
        self.weights.get(word).copied().unwrap_or(self.default_weight)
    }

    pub fn default_weight(&self) -> T {
        self.default_weight
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.weights.iter().map(|(w, v)| (w.as_str(), *v))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG}\tcorpus_size={}\tdefault_weight={}\n",
            self.corpus_size, self.default_weight
        );
        for (w, v) in &self.weights {
            out.push_str(w);
            out.push('\t');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("idf file: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let (corpus_size, default_weight) = match fields.as_slice() {
            [HEADER_TAG, n, d] => {
                let n = n
                    .strip_prefix("corpus_size=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad corpus_size"))?;
                let d = d
                    .strip_prefix("default_weight=")
                    .and_then(|v| v.parse::<T>().ok())
                    .ok_or_else(|| bad("bad default_weight"))?;
                (n, d)
            }
            _ => return Err(bad("bad header")),
        };
        let mut weights = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (w, v) = line
                .split_once('\t')
                .ok_or_else(|| bad(&format!("line {}: expected word<TAB>weight", i + 2)))?;
            let v: T = v
                .parse()
                .map_err(|_| bad(&format!("line {}: bad weight {v:?}", i + 2)))?;
            weights.insert(w.to_string(), v);
        }
        Ok(Self {
            weights,
            default_weight,
            corpus_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Builds the table from documents given as word sequences.
pub fn compute_idf<T, D, W>(documents: D) -> Result<IdfTable<T>>
where
    T: Scalar,
    D: IntoIterator,
    D::Item: IntoIterator<Item = W>,
    W: AsRef<str>,
{
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0usize;
    for doc in documents {
        n += 1;
        let unique: HashSet<String> = doc.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        for w in unique {
            *df.entry(w).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let total = T::of_usize(n);
    let raw: BTreeMap<String, T> = df
        .into_iter()
        .map(|(w, d)| (w, (total / T::of_usize(d)).ln()))
        .collect();
    let (lo, hi) = raw
        .values()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let weights = raw
        .into_iter()
        .map(|(w, v)| {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { T::one() };
            (w, norm)
        })
        .collect();
    Ok(IdfTable {
        weights,
        default_weight: T::one(),
        corpus_size: n,
    })
}

/// One document per example; a sentence pair contributes both sentences to
/// the same document.
pub fn compute_idf_from_examples<T: Scalar>(examples: &[InputExample]) -> Result<IdfTable<T>> {
    compute_idf(examples.iter().map(|ex| {
        let mut words = words_of(&ex.sentence1);
        if let Some(s2) = &ex.sentence2 {
            words.extend(words_of(s2));
        }
        words
    }))
}

/// Weight of every token in a span: the weight of the word it belongs to.
pub fn token_weights<T: Scalar>(prompt: &BuiltPrompt, span: &ComponentSpan, table: &IdfTable<T>) -> Result<Vec<T>> {
    span.positions
        .iter()
        .map(|&p| match prompt.word_alignment.get(p) {
            Some(Some(word)) => Ok(table.weight(word)),
            Some(None) => Err(Error::MissingAlignment(p)),
            None => Err(Error::PositionOutOfRange {
                position: p,
                len: prompt.len(),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Component;

    fn docs() -> Vec<Vec<&'static str>> {
        vec![vec!["the", "cat", "sat"], vec!["the", "dog", "ran"], vec!["a", "dog"]]
    }

    #[test]
    fn hand_computed_table() {
        // raw: the = dog = ln(3/2), others ln 3; min-max puts them at 0 and 1
        let t: IdfTable<f64> = compute_idf(docs()).unwrap();
        assert_eq!(t.corpus_size(), 3);
        assert_eq!(t.weight("the"), 0.0);
        assert_eq!(t.weight("dog"), 0.0);
        for w in ["cat", "sat", "ran", "a"] {
            assert_eq!(t.weight(w), 1.0, "{w}");
        }
        assert_eq!(t.weight("zyx"), 1.0);
    }

    #[test]
    fn degenerate_single_word() {
        let t: IdfTable<f64> = compute_idf(vec![vec!["x"], vec!["x", "x"]]).unwrap();
        assert_eq!(t.weight("x"), 1.0);
    }

    #[test]
    fn empty_corpus() {
        let r: Result<IdfTable<f64>> = compute_idf(Vec::<Vec<&str>>::new());
        assert!(matches!(r, Err(Error::EmptyCorpus)));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let t: IdfTable<f64> = compute_idf(vec![
            vec!["alpha", "beta"],
            vec!["beta", "gamma"],
            vec!["gamma", "delta", "beta"],
            vec!["eps"],
            vec!["eps", "beta", "zeta"],
            vec!["eta"],
            vec!["eta"],
        ])
        .unwrap();
        let back = IdfTable::<f64>::from_text(&t.to_text()).unwrap();
        for ((a, x), (b, y)) in t.iter().zip(back.iter()) {
            assert_eq!(a, b);
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back, t);
    }

    #[test]
    fn weights_for_spans() {
        let t: IdfTable<f64> = compute_idf(docs()).unwrap();
        let prompt = BuiltPrompt {
            label: 0,
            token_ids: vec![0, 1, 2, 3, 4, 5],
            spans: vec![],
            word_alignment: vec![None, Some("the".into()), Some("dog".into()), Some("cat".into()), Some("zyx".into()), None],
        };
        let span = |p: Vec<usize>| ComponentSpan {
            component: Component::Sentence1,
            positions: p,
        };
        assert_eq!(token_weights(&prompt, &span(vec![1, 2]), &t).unwrap(), vec![0.0, 0.0]);
        assert_eq!(token_weights(&prompt, &span(vec![3]), &t).unwrap(), vec![1.0]);
        assert_eq!(token_weights(&prompt, &span(vec![4]), &t).unwrap(), vec![1.0]);
        assert!(matches!(
            token_weights(&prompt, &span(vec![5]), &t),
            Err(Error::MissingAlignment(5))
        ));
    }
}
