//! Tasks, labels, verbalizers and prompt templates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub const SENT1: &str = "<S1>";
pub const SENT2: &str = "<S2>";
pub const LABEL_WORD: &str = "<V>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub id: usize,
    pub name: String,
}

/// Injective map from label id to a single vocabulary word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    words: Vec<String>,
}

impl Verbalizer {
    pub fn new(words: Vec<String>) -> Self {
        Self { words }
    }

    pub fn word(&self, label: usize) -> &str {
        &self.words[label]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SingleSentence,
    SentencePair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Sentence1,
    Sentence2,
    LabelWord,
    Literal(String),
}

/// A prompt template such as `<S1> It is <V> .` or `<S1> ? <V> , <S2>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
    kind: TaskKind,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidTemplate {
            template: source.to_string(),
            reason: reason.to_string(),
        };
        let mut segments = Vec::new();
        let mut rest = source;
        loop {
            let next = [SENT1, SENT2, LABEL_WORD]
                .iter()
                .filter_map(|p| rest.find(p).map(|i| (i, *p)))
                .min_by_key(|(i, _)| *i);
            let Some((at, placeholder)) = next else {
                push_literal(&mut segments, rest);
                break;
            };
            push_literal(&mut segments, &rest[..at]);
            segments.push(match placeholder {
                SENT1 => Segment::Sentence1,
                SENT2 => Segment::Sentence2,
                _ => Segment::LabelWord,
            });
            rest = &rest[at + placeholder.len()..];
        }
        let count = |s: &Segment| segments.iter().filter(|x| *x == s).count();
        if count(&Segment::LabelWord) != 1 {
            return Err(invalid("needs exactly one <V> placeholder"));
        }
        if count(&Segment::Sentence1) != 1 {
            return Err(invalid("needs exactly one <S1> placeholder"));
        }
        let kind = match count(&Segment::Sentence2) {
            0 => TaskKind::SingleSentence,
            1 => TaskKind::SentencePair,
            _ => return Err(invalid("at most one <S2> placeholder")),
        };
        Ok(Self {
            source: source.to_string(),
            segments,
            kind,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}

fn push_literal(segments: &mut Vec<Segment>, text: &str) {
    let text = text.trim();
    if !text.is_empty() {
        segments.push(Segment::Literal(text.to_string()));
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Accuracy,
    BinaryF1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "acc",
            Metric::BinaryF1 => "f1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub labels: Vec<Label>,
    pub verbalizer: Verbalizer,
    pub template: Template,
    pub metric: Metric,
    pub positive_label: Option<usize>,
}

impl TaskSpec {
    /// Builds a spec from `(label name, label word)` pairs; ids follow the
    /// pair order.
    pub fn new(
        name: &str,
        template: &str,
        labels: &[(&str, &str)],
        metric: Metric,
        positive_label: Option<&str>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            labels: labels
                .iter()
                .enumerate()
                .map(|(id, (n, _))| Label {
                    id,
                    name: n.to_string(),
                })
                .collect(),
            verbalizer: Verbalizer::new(labels.iter().map(|(_, w)| w.to_string()).collect()),
            template: Template::parse(template)?,
            metric,
            positive_label: match positive_label {
                None => None,
                Some(p) => Some(
                    labels
                        .iter()
                        .position(|(n, _)| *n == p)
                        .ok_or_else(|| Error::InvalidTask(format!("unknown positive label {p:?}")))?,
                ),
            },
        };
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn kind(&self) -> TaskKind {
        self.template.kind()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_id(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    pub fn label_word(&self, label: usize) -> &str {
        self.verbalizer.word(label)
    }

    /// Tokenizer-independent invariants.
    pub fn check_structure(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::InvalidTask(format!(
                "{}: need at least 2 labels, got {}",
                self.name,
                self.labels.len()
            )));
        }
        let mut names = HashMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            if l.id != i {
                return Err(Error::InvalidTask(format!("label ids must be contiguous from 0, found {} at {i}", l.id)));
            }
            if names.insert(l.name.as_str(), i).is_some() {
                return Err(Error::InvalidTask(format!("duplicate label name {:?}", l.name)));
            }
        }
        if self.verbalizer.words().len() != self.labels.len() {
            return Err(Error::InvalidTask("verbalizer must cover every label".into()));
        }
        match (self.metric, self.positive_label) {
            (Metric::BinaryF1, None) => {
                return Err(Error::InvalidTask("binary-f1 requires positive_label".into()))
            }
            (Metric::Accuracy, Some(_)) => {
                return Err(Error::InvalidTask("positive_label is only meaningful for binary-f1".into()))
            }
            (_, Some(p)) if p >= self.labels.len() => {
                return Err(Error::InvalidTask(format!("positive label id {p} out of range")))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&TaskFile::from(self)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: TaskFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk form of a [`TaskSpec`].
#[derive(Debug, Serialize, Deserialize)]
struct TaskFile {
    name: String,
    template: String,
    metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positive_label: Option<String>,
    labels: Vec<LabelEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelEntry {
    name: String,
    word: String,
}

impl From<&TaskSpec> for TaskFile {
    fn from(spec: &TaskSpec) -> Self {
        Self {
            name: spec.name.clone(),
            template: spec.template.to_string(),
            metric: spec.metric,
            positive_label: spec.positive_label.map(|p| spec.labels[p].name.clone()),
            labels: spec
                .labels
                .iter()
                .map(|l| LabelEntry {
                    name: l.name.clone(),
                    word: spec.label_word(l.id).to_string(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TaskFile> for TaskSpec {
    type Error = Error;

    fn try_from(f: TaskFile) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = f
            .labels
            .iter()
            .map(|l| (l.name.as_str(), l.word.as_str()))
            .collect();
        TaskSpec::new(&f.name, &f.template, &pairs, f.metric, f.positive_label.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputExample {
    pub sentence1: String,
    pub sentence2: Option<String>,
    pub gold: Option<usize>,
}

impl InputExample {
    pub fn single(sentence: impl Into<String>, gold: Option<usize>) -> Self {
        Self {
            sentence1: sentence.into(),
            sentence2: None,
            gold,
        }
    }

    pub fn pair(first: impl Into<String>, second: impl Into<String>, gold: Option<usize>) -> Self {
        Self {
            sentence1: first.into(),
            sentence2: Some(second.into()),
            gold,
        }
    }

    pub fn check_shape(&self, kind: TaskKind) -> Result<()> {
        if self.sentence1.trim().is_empty() {
            return Err(Error::InvalidExample("sentence1 is empty".into()));
        }
        match (kind, &self.sentence2) {
            (TaskKind::SingleSentence, Some(_)) => {
                Err(Error::InvalidExample("single-sentence task given a sentence pair".into()))
            }
            (TaskKind::SentencePair, None) => {
                Err(Error::InvalidExample("sentence-pair task given a single sentence".into()))
            }
            _ => Ok(()),
        }
    }
}

const SINGLE: &str = "<S1> It is <V> .";
const PAIR_Q: &str = "<S1> ? <V> , <S2>";
const PAIR_DOT: &str = "<S1> . <V> , <S2>";

/// The ten manual-template tasks: SNLI, MNLI, QNLI, RTE, MRPC, QQP, SST-2,
/// SST-5, MR and CR. Label names follow the usual dataset label strings.
///
/// MRPC and QQP are scored with F1 on the paraphrase class `1` (word "Yes").
pub fn builtin_tasks() -> Vec<TaskSpec> {
    let nli = [("entailment", "Yes"), ("contradiction", "No"), ("neutral", "Maybe")];
    let binary_nli = [("entailment", "Yes"), ("not_entailment", "No")];
    let paraphrase = [("0", "No"), ("1", "Yes")];
    let sentiment = [("0", "terrible"), ("1", "great")];
    let fine = [("0", "terrible"), ("1", "bad"), ("2", "okay"), ("3", "good"), ("4", "great")];
    let acc = Metric::Accuracy;
    let f1 = Metric::BinaryF1;
    [
        TaskSpec::new("SNLI", PAIR_Q, &nli, acc, None),
        TaskSpec::new("MNLI", PAIR_Q, &nli, acc, None),
        TaskSpec::new("QNLI", PAIR_Q, &binary_nli, acc, None),
        TaskSpec::new("RTE", PAIR_Q, &binary_nli, acc, None),
        TaskSpec::new("MRPC", PAIR_Q, &paraphrase, f1, Some("1")),
        TaskSpec::new("QQP", PAIR_DOT, &paraphrase, f1, Some("1")),
        TaskSpec::new("SST-2", SINGLE, &sentiment, acc, None),
        TaskSpec::new("SST-5", SINGLE, &fine, acc, None),
        TaskSpec::new("MR", SINGLE, &sentiment, acc, None),
        TaskSpec::new("CR", SINGLE, &sentiment, acc, None),
    ]
    .into_iter()
    .map(|t| t.expect("built-in tasks are well formed"))
    .collect()
}

pub fn builtin_task(name: &str) -> Option<TaskSpec> {
    builtin_tasks()
        .into_iter()
        .find(|t| t.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    MultiTokenLabelWord { label: String, word: String, tokens: usize },
    UnknownLabelWord { label: String, word: String },
    DuplicateLabelWord { labels: Vec<String>, word: String },
    Structure(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MultiTokenLabelWord { label, word, tokens } => write!(
                f,
                "label {label:?}: label word {word:?} splits into {tokens} tokens"
            ),
            Self::UnknownLabelWord { label, word } => {
                write!(f, "label {label:?}: label word {word:?} is not in the vocabulary")
            }
            Self::DuplicateLabelWord { labels, word } => {
                write!(f, "duplicate label word {word:?} for labels {labels:?}")
            }
            Self::Structure(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msg: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
            Err(Error::InvalidTask(msg.join("; ")))
        }
    }
}

/// Checks the verbalizer against a tokenizer: every label word must be one
/// known token and no two labels may share a word.
pub fn validate_task(spec: &TaskSpec, tokenizer: &dyn Tokenizer) -> ValidationReport {
    let mut issues = Vec::new();
    if let Err(e) = spec.check_structure() {
        issues.push(ValidationIssue::Structure(e.to_string()));
    }
    let mut by_word: Vec<(String, Vec<String>)> = Vec::new();
    for label in &spec.labels {
        let Some(word) = spec.verbalizer.words().get(label.id) else {
            continue;
        };
        let enc = tokenizer.encode(word);
        if enc.len() != 1 {
            issues.push(ValidationIssue::MultiTokenLabelWord {
                label: label.name.clone(),
                word: word.clone(),
                tokens: enc.len(),
            });
        } else if enc.ids[0] == tokenizer.unk_id() {
            issues.push(ValidationIssue::UnknownLabelWord {
                label: label.name.clone(),
                word: word.clone(),
            });
        }
        let key = enc.words.first().map(|w| w.text.clone()).unwrap_or_default();
        match by_word.iter_mut().find(|(w, _)| *w == key) {
            Some((_, labels)) => labels.push(label.name.clone()),
            None => by_word.push((key, vec![label.name.clone()])),
        }
    }
    for (word, labels) in by_word {
        if labels.len() > 1 {
            issues.push(ValidationIssue::DuplicateLabelWord { labels, word });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{WordPieceTokenizer, WordTokenizer, CLS, PAD, SEP, UNK};

    #[test]
    fn template_parsing() {
        let t = Template::parse("<S1> It is <V> .").unwrap();
        assert_eq!(t.kind(), TaskKind::SingleSentence);
        assert_eq!(
            t.segments(),
            &[
                Segment::Sentence1,
                Segment::Literal("It is".into()),
                Segment::LabelWord,
                Segment::Literal(".".into())
            ]
        );
        let p = Template::parse("<S1>? <V>, <S2>").unwrap();
        assert_eq!(p.kind(), TaskKind::SentencePair);
        assert!(Template::parse("<S1> It is .").is_err());
        assert!(Template::parse("<V> <V> <S1>").is_err());
        assert!(Template::parse("It is <V>").is_err());
    }

    #[test]
    fn builtin_table() {
        let tasks = builtin_tasks();
        assert_eq!(tasks.len(), 10);
        let sst2 = builtin_task("SST-2").unwrap();
        assert_eq!(sst2.template.as_str(), "<S1> It is <V> .");
        assert_eq!(sst2.verbalizer.words(), ["terrible", "great"]);
        let snli = builtin_task("snli").unwrap();
        assert_eq!(snli.num_labels(), 3);
        assert_eq!(snli.kind(), TaskKind::SentencePair);
        assert_eq!(snli.verbalizer.words(), ["Yes", "No", "Maybe"]);
        let sst5 = builtin_task("SST-5").unwrap();
        assert_eq!(sst5.verbalizer.words(), ["terrible", "bad", "okay", "good", "great"]);
        let qqp = builtin_task("QQP").unwrap();
        assert_eq!(qqp.template.as_str(), "<S1> . <V> , <S2>");
        assert_eq!(qqp.positive_label, Some(1));
        for t in &tasks {
            let words = t.verbalizer.words();
            assert_eq!(words.len(), t.num_labels());
            for (i, a) in words.iter().enumerate() {
                assert!(words[i + 1..].iter().all(|b| b != a), "{}", t.name);
            }
        }
    }

    #[test]
    fn toml_round_trip_of_builtins() {
        for t in builtin_tasks() {
            let text = t.to_toml().unwrap();
            assert_eq!(TaskSpec::from_toml(&text).unwrap(), t);
        }
    }

    #[test]
    fn f1_needs_positive_label() {
        let err = TaskSpec::new("x", SINGLE, &[("a", "bad"), ("b", "good")], Metric::BinaryF1, None);
        assert!(err.is_err());
    }

    #[test]
    fn sst2_validates_with_word_tokenizer() {
        let spec = builtin_task("SST-2").unwrap();
        let tok = WordTokenizer::from_texts(["terrible great it is ."]);
        assert!(validate_task(&spec, &tok).is_valid());
    }

    #[test]
    fn duplicate_label_word_rejected() {
        let spec = TaskSpec::new("dup", SINGLE, &[("0", "great"), ("1", "great")], Metric::Accuracy, None)
            .unwrap();
        let tok = WordTokenizer::from_texts(["great"]);
        let report = validate_task(&spec, &tok);
        assert!(matches!(
            &report.issues[..],
            [ValidationIssue::DuplicateLabelWord { word, .. }] if word == "great"
        ));
        assert!(report.into_result().unwrap_err().to_string().contains("duplicate label word"));
    }

    #[test]
    fn multi_token_label_word_names_label() {
        // "superb" is absent as a whole word, so wordpiece yields "super" + "##b".
        let vocab = [PAD, UNK, CLS, SEP, "terrible", "super", "##b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let tok = WordPieceTokenizer::from_tokens(vocab).unwrap();
        let spec = TaskSpec::new("rare", SINGLE, &[("neg", "terrible"), ("pos", "superb")], Metric::Accuracy, None)
            .unwrap();
        let report = validate_task(&spec, &tok);
        assert_eq!(
            report.issues,
            vec![ValidationIssue::MultiTokenLabelWord {
                label: "pos".into(),
                word: "superb".into(),
                tokens: 2
            }]
        );
    }

    #[test]
    fn example_shape() {
        assert!(InputExample::single("a", None).check_shape(TaskKind::SingleSentence).is_ok());
        assert!(InputExample::single(" ", None).check_shape(TaskKind::SingleSentence).is_err());
        assert!(InputExample::single("a", None).check_shape(TaskKind::SentencePair).is_err());
        assert!(InputExample::pair("a", "b", None).check_shape(TaskKind::SingleSentence).is_err());
    }
}
