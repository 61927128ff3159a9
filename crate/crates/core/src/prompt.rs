//! Instantiates one discriminative prompt per label and records which token
//! positions belong to the label word and to each input sentence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{InputExample, Segment, TaskKind, TaskSpec};
use crate::tokenizer::{Encoding, Tokenizer};

/// Default maximum prompt length in tokens.
pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    LabelWord,
    Sentence1,
    Sentence2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSpan {
    pub component: Component,
    /// Sorted token positions within the prompt.
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub label: usize,
    pub token_ids: Vec<u32>,
    /// Label word span first, then sentence 1, then sentence 2 if present.
    pub spans: Vec<ComponentSpan>,
    /// Source word of each position; `None` only for the special markers.
    pub word_alignment: Vec<Option<String>>,
}

impl BuiltPrompt {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn span(&self, component: Component) -> Option<&ComponentSpan> {
        self.spans.iter().find(|s| s.component == component)
    }

    pub fn label_position(&self) -> usize {
        self.span(Component::LabelWord).expect("every prompt has a label word span").positions[0]
    }
}

/// Token counts that a sentence pair keeps under a budget, dropping the tail
/// of the currently longer sentence first (the second one on ties). Never
/// goes below one token per sentence.
pub fn truncate_lengths(first: usize, second: Option<usize>, budget: usize) -> (usize, Option<usize>) {
    let (mut a, mut b) = (first, second);
    loop {
        let total = a + b.unwrap_or(0);
        if total <= budget {
            break;
        }
        match b {
            Some(nb) if nb >= a && nb > 1 => b = Some(nb - 1),
            _ if a > 1 => a -= 1,
            Some(nb) if nb > 1 => b = Some(nb - 1),
            _ => break,
        }
    }
    (a, b)
}

struct Encoded {
    first: Encoding,
    second: Option<Encoding>,
    literals: Vec<Encoding>,
    label_tokens: Vec<(u32, String)>,
}

impl Encoded {
    fn overhead(&self) -> usize {
        2 + 1 + self.literals.iter().map(Encoding::len).sum::<usize>()
    }
}

fn encode_parts(example: &InputExample, spec: &TaskSpec, tokenizer: &dyn Tokenizer) -> Result<Encoded> {
    example.check_shape(spec.kind())?;
    let first = tokenizer.encode(&example.sentence1);
    let second = example.sentence2.as_deref().map(|s| tokenizer.encode(s));
    let literals = spec
        .template
        .segments()
        .iter()
        .filter_map(|s| match s {
            Segment::Literal(text) => Some(tokenizer.encode(text)),
            _ => None,
        })
        .collect();
    let label_tokens = spec
        .verbalizer
        .words()
        .iter()
        .map(|w| {
            let enc = tokenizer.encode(w);
            match enc.ids.as_slice() {
                [id] => Ok((*id, enc.words[0].text.clone())),
                _ => Err(Error::InvalidTask(format!(
                    "label word {w:?} is {} tokens, expected 1",
                    enc.len()
                ))),
            }
        })
        .collect::<Result<_>>()?;
    Ok(Encoded {
        first,
        second,
        literals,
        label_tokens,
    })
}

/// Longest-first truncation of an example so its prompt fits `max_len`.
///
/// Sentences are cut at the end of the last kept token's word. An example
/// that cannot be encoded is returned unchanged.
pub fn truncate(example: &InputExample, spec: &TaskSpec, tokenizer: &dyn Tokenizer, max_len: usize) -> InputExample {
    let Ok(parts) = encode_parts(example, spec, tokenizer) else {
        return example.clone();
    };
    let budget = max_len.saturating_sub(parts.overhead());
    let (n1, n2) = truncate_lengths(parts.first.len(), parts.second.as_ref().map(Encoding::len), budget);
    let cut = |text: &str, enc: &Encoding, n: usize| {
        if n == 0 || n >= enc.len() {
            text.to_string()
        } else {
            text[..enc.end_offset(n - 1)].to_string()
        }
    };
    InputExample {
        sentence1: cut(&example.sentence1, &parts.first, n1),
        sentence2: match (&example.sentence2, &parts.second, n2) {
            (Some(t), Some(e), Some(n)) => Some(cut(t, e, n)),
            (s, _, _) => s.clone(),
        },
        gold: example.gold,
    }
}

/// Builds the |labels| prompts for one example.
///
/// The prompts differ only at the label word position. Template literals
/// and the `[CLS]`/`[SEP]` markers belong to no span.
pub fn build_prompts(
    example: &InputExample,
    spec: &TaskSpec,
    tokenizer: &dyn Tokenizer,
    max_len: usize,
) -> Result<Vec<BuiltPrompt>> {
    let parts = encode_parts(example, spec, tokenizer)?;
    if parts.first.is_empty() {
        return Err(Error::EmptySentence(1));
    }
    if parts.second.as_ref().is_some_and(Encoding::is_empty) {
        return Err(Error::EmptySentence(2));
    }
    let overhead = parts.overhead();
    let sentences = if spec.kind() == TaskKind::SentencePair { 2 } else { 1 };
    if max_len < overhead + sentences {
        return Err(Error::MaxLenTooSmall { max_len, overhead });
    }
    let (n1, n2) = truncate_lengths(
        parts.first.len(),
        parts.second.as_ref().map(Encoding::len),
        max_len - overhead,
    );

    let mut ids = vec![tokenizer.cls_id()];
    let mut align: Vec<Option<String>> = vec![None];
    let mut label_pos = 0;
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    let mut literals = parts.literals.iter();
    let push_sentence = |ids: &mut Vec<u32>, align: &mut Vec<Option<String>>, enc: &Encoding, n: usize| {
        let start = ids.len();
        for t in 0..n {
            ids.push(enc.ids[t]);
            align.push(Some(enc.word_of(t).to_string()));
        }
        (start..start + n).collect::<Vec<_>>()
    };
    for segment in spec.template.segments() {
        match segment {
            Segment::Sentence1 => s1 = push_sentence(&mut ids, &mut align, &parts.first, n1),
            Segment::Sentence2 => {
                let enc = parts.second.as_ref().expect("shape checked");
                s2 = push_sentence(&mut ids, &mut align, enc, n2.expect("pair lengths"));
            }
            Segment::LabelWord => {
                label_pos = ids.len();
                ids.push(parts.label_tokens[0].0);
                align.push(Some(parts.label_tokens[0].1.clone()));
            }
            Segment::Literal(_) => {
                let enc = literals.next().expect("one encoding per literal");
                for t in 0..enc.len() {
                    ids.push(enc.ids[t]);
                    align.push(Some(enc.word_of(t).to_string()));
                }
            }
        }
    }
    ids.push(tokenizer.sep_id());
    align.push(None);

    let mut spans = vec![
        ComponentSpan {
            component: Component::LabelWord,
            positions: vec![label_pos],
        },
        ComponentSpan {
            component: Component::Sentence1,
            positions: s1,
        },
    ];
    if spec.kind() == TaskKind::SentencePair {
        spans.push(ComponentSpan {
            component: Component::Sentence2,
            positions: s2,
        });
    }

    Ok(parts
        .label_tokens
        .iter()
        .enumerate()
        .map(|(label, (id, word))| {
            let mut token_ids = ids.clone();
            token_ids[label_pos] = *id;
            let mut word_alignment = align.clone();
            word_alignment[label_pos] = Some(word.clone());
            BuiltPrompt {
                label,
                token_ids,
                spans: spans.clone(),
                word_alignment,
            }
        })
        .collect())
}
