//! Tokenizers that expose a token-to-word alignment.
//!
//! Every tokenizer lowercases its input and pre-splits it into words on
//! whitespace and punctuation. The word boundaries are shared with the IDF
//! table so a token's weight is the weight of the word it came from.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// A lowercased word with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and isolates every punctuation character.
pub fn pre_tokenize(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut current: Option<usize> = None;
    let flush = |words: &mut Vec<Word>, start: Option<usize>, end: usize| {
        if let Some(s) = start {
            words.push(Word {
                text: text[s..end].to_lowercase(),
                start: s,
                end,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut words, current.take(), i);
        } else if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_ascii()) {
            flush(&mut words, current.take(), i);
            let end = i + c.len_utf8();
            words.push(Word {
                text: text[i..end].to_lowercase(),
                start: i,
                end,
            });
        } else if current.is_none() {
            current = Some(i);
        }
    }
    flush(&mut words, current, text.len());
    words
}

/// Lowercased word segmentation, without offsets.
pub fn words_of(text: &str) -> Vec<String> {
    pre_tokenize(text).into_iter().map(|w| w.text).collect()
}

/// Token ids of one text plus the alignment back to its words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    /// Index into `words` for every token.
    pub word_index: Vec<usize>,
    pub words: Vec<Word>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The word a token belongs to.
    pub fn word_of(&self, token: usize) -> &str {
        &self.words[self.word_index[token]].text
    }

    /// Byte offset just past the given token's word.
    pub fn end_offset(&self, token: usize) -> usize {
        self.words[self.word_index[token]].end
    }
}

pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Encoding;
    fn token_id(&self, token: &str) -> Option<u32>;
    fn cls_id(&self) -> u32;
    fn sep_id(&self) -> u32;
    fn unk_id(&self) -> u32;
    fn vocab_size(&self) -> usize;
}

fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone)]
struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    unk: u32,
}

impl Vocab {
    fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        let special = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Format(format!("vocabulary lacks {name}")))
        };
        Ok(Self {
            cls: special(CLS)?,
            sep: special(SEP)?,
            unk: special(UNK)?,
            tokens,
            index,
        })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        fs::write(path, out)?;
        Ok(())
    }
}

/// One token per word. Unknown words map to `[UNK]`.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    vocab: Vocab,
}

impl WordTokenizer {
    /// Builds a vocabulary from every word of `texts`, sorted, after the
    /// four special tokens.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = texts
            .into_iter()
            .flat_map(|t| words_of(t.as_ref()))
            .collect();
        let tokens = [PAD, UNK, CLS, SEP]
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| ![PAD, UNK, CLS, SEP].contains(&w.as_str())))
            .collect();
        Self {
            vocab: Vocab::new(tokens).expect("specials are present and unique"),
        }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        Ok(Self {
            vocab: Vocab::new(tokens)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tokens(read_vocab(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.vocab.save(path)
    }

    pub fn tokens(&self) -> &[String] {
        &self.vocab.tokens
    }
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Encoding {
        let words = pre_tokenize(text);
        let ids = words
            .iter()
            .map(|w| self.vocab.index.get(&w.text).copied().unwrap_or(self.vocab.unk))
            .collect();
        Encoding {
            ids,
            word_index: (0..words.len()).collect(),
            words,
        }
    }

    fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.index.get(token).copied()
    }

    fn cls_id(&self) -> u32 {
        self.vocab.cls
    }

    fn sep_id(&self) -> u32 {
        self.vocab.sep
    }

    fn unk_id(&self) -> u32 {
        self.vocab.unk
    }

    fn vocab_size(&self) -> usize {
        self.vocab.tokens.len()
    }
}

/// Greedy longest-match-first subword tokenizer over a `vocab.txt` style
/// vocabulary, continuation pieces prefixed with `##`.
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: Vocab,
    max_chars_per_word: usize,
}

impl WordPieceTokenizer {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        Ok(Self {
            vocab: Vocab::new(tokens)?,
            max_chars_per_word: 100,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tokens(read_vocab(path)?)
    }

    fn split_word(&self, word: &str) -> Option<Vec<u32>> {
        if word.chars().count() > self.max_chars_per_word {
            return None;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < word.len() {
            let mut end = word.len();
            let mut found = None;
            while start < end {
                let piece = if start == 0 {
                    word[start..end].to_string()
                } else {
                    format!("##{}", &word[start..end])
                };
                if let Some(&id) = self.vocab.index.get(&piece) {
                    found = Some(id);
                    break;
                }
                end = word[..end]
                    .char_indices()
                    .next_back()
                    .map(|(i, _)| i)
                    .unwrap_or(start);
            }
            pieces.push(found?);
            start = end;
        }
        Some(pieces)
    }
}

impl Tokenizer for WordPieceTokenizer {
    fn encode(&self, text: &str) -> Encoding {
        let words = pre_tokenize(text);
        let mut ids = Vec::new();
        let mut word_index = Vec::new();
        for (wi, w) in words.iter().enumerate() {
            match self.split_word(&w.text) {
                Some(pieces) => {
                    word_index.extend(std::iter::repeat_n(wi, pieces.len()));
                    ids.extend(pieces);
                }
                None => {
                    ids.push(self.vocab.unk);
                    word_index.push(wi);
                }
            }
        }
        Encoding {
            ids,
            word_index,
            words,
        }
    }

    fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.index.get(token).copied()
    }

    fn cls_id(&self) -> u32 {
        self.vocab.cls
    }

    fn sep_id(&self) -> u32 {
        self.vocab.sep
    }

    fn unk_id(&self) -> u32 {
        self.vocab.unk
    }

    fn vocab_size(&self) -> usize {
        self.vocab.tokens.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_tokenize_splits_punctuation() {
        let w = words_of("It's just merely very bad.");
        assert_eq!(w, ["it", "'", "s", "just", "merely", "very", "bad", "."]);
        let words = pre_tokenize("Hi, you");
        assert_eq!(words[1].text, ",");
        assert_eq!((words[2].start, words[2].end), (4, 7));
    }

    #[test]
    fn word_tokenizer_maps_unknown_words() {
        let tok = WordTokenizer::from_texts(["the cat sat"]);
        assert_eq!(tok.vocab_size(), 7);
        let enc = tok.encode("The dog sat");
        assert_eq!(enc.ids[1], tok.unk_id());
        assert_eq!(enc.ids[2], tok.token_id("sat").unwrap());
        assert_eq!(enc.word_of(0), "the");
    }

    #[test]
    fn wordpiece_splits_rare_word() {
        let vocab = [PAD, UNK, CLS, SEP, "un", "##believ", "##able", "great"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let tok = WordPieceTokenizer::from_tokens(vocab).unwrap();
        let enc = tok.encode("great unbelievable");
        assert_eq!(enc.ids, vec![7, 4, 5, 6]);
        assert_eq!(enc.word_index, vec![0, 1, 1, 1]);
        assert_eq!(tok.encode("zzz").ids, vec![tok.unk_id()]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let tok = WordTokenizer::from_texts(["a b c"]);
        tok.save(&path).unwrap();
        let back = WordTokenizer::load(&path).unwrap();
        assert_eq!(back.tokens(), tok.tokens());
    }
}
