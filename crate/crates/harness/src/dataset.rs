//! Tab-separated dataset files.
//!
//! One example per row: `sentence1 [TAB sentence2] TAB label`, UTF-8, no
//! quoting. A first row whose last field is `label` is a header and skipped.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use semscore::{InputExample, TaskKind, TaskSpec};

pub fn parse_dataset(text: &str, spec: &TaskSpec) -> Result<Vec<InputExample>> {
    let columns = match spec.kind() {
        TaskKind::SingleSentence => 2,
        TaskKind::SentencePair => 3,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("row {}", i + 1))?;
        if i == 0 && row.iter().next_back().is_some_and(|f| f.trim().eq_ignore_ascii_case("label")) {
            continue;
        }
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != columns {
            bail!(
                "row {}: {} columns, task {} expects {columns}",
                i + 1,
                row.len(),
                spec.name
            );
        }
        let label = row[columns - 1].trim();
        let gold = spec
            .label_id(label)
            .with_context(|| format!("row {}: unknown label {label:?} for task {}", i + 1, spec.name))?;
        out.push(match spec.kind() {
            TaskKind::SingleSentence => InputExample::single(&row[0], Some(gold)),
            TaskKind::SentencePair => InputExample::pair(&row[0], &row[1], Some(gold)),
        });
    }
    Ok(out)
}

pub fn read_dataset(path: &Path, spec: &TaskSpec) -> Result<Vec<InputExample>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dataset(&text, spec).with_context(|| format!("parsing {}", path.display()))
}

/// Writes examples with a header row. Tabs and newlines inside sentences are
/// replaced by spaces.
pub fn write_dataset(path: &Path, examples: &[InputExample], spec: &TaskSpec) -> Result<()> {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut text = match spec.kind() {
        TaskKind::SingleSentence => "sentence\tlabel\n".to_string(),
        TaskKind::SentencePair => "sentence1\tsentence2\tlabel\n".to_string(),
    };
    for ex in examples {
        let gold = ex.gold.context("cannot write an unlabelled example")?;
        text.push_str(&clean(&ex.sentence1));
        text.push('\t');
        if let Some(s2) = &ex.sentence2 {
            text.push_str(&clean(s2));
            text.push('\t');
        }
        text.push_str(&spec.labels[gold].name);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Training pool and test set of a task directory (`train.tsv`, `test.tsv`).
pub fn read_task_dir(dir: &Path, spec: &TaskSpec) -> Result<(Vec<InputExample>, Vec<InputExample>)> {
    let train = read_dataset(&dir.join("train.tsv"), spec)?;
    let test = read_dataset(&dir.join("test.tsv"), spec)?;
    if train.is_empty() || test.is_empty() {
        bail!("{}: train.tsv and test.tsv must both be non-empty", dir.display());
    }
    Ok((train, test))
}
