//! Summaries, text tables and the line-delimited results file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::experiment::{Mode, RunRecord};

/// Mean and population standard deviation over the seeds of one
/// (task, mode, K) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub mode: Mode,
    pub k: usize,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    pub lambda0: Vec<f64>,
    pub unanimous_ratio: f64,
    /// Mean over the runs where the subset is non-empty.
    pub unanimous_metric: Option<f64>,
    pub disagreed_metric: Option<f64>,
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ResultLine {
    Run(RunRecord),
    Summary(SummaryRow),
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_of_some(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

/// Groups records by (task, mode, K), in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, Mode, usize)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.task.clone(), r.mode, r.k);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let overall: Vec<f64> = rs.iter().map(|r| r.overall).collect();
            let (mean, std) = mean_std(&overall);
            let ur: Vec<f64> = rs.iter().map(|r| r.unanimous_ratio).collect();
            SummaryRow {
                task: rs[0].task.clone(),
                mode: rs[0].mode,
                k: rs[0].k,
                metric: rs[0].metric.clone(),
                runs: rs.len(),
                mean,
                std,
                seeds: rs.iter().map(|r| r.seed).collect(),
                lambda0: rs.iter().map(|r| r.lambda0).collect(),
                unanimous_ratio: mean_std(&ur).0,
                unanimous_metric: mean_of_some(rs.iter().map(|r| r.unanimous_metric)),
                disagreed_metric: mean_of_some(rs.iter().map(|r| r.disagreed_metric)),
            }
        })
        .collect()
}

pub fn to_jsonl(lines: &[ResultLine]) -> Result<String> {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Appends `lines` to the results file at `path`, creating it if needed.
pub fn append_jsonl(path: &Path, lines: &[ResultLine]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    f.write_all(to_jsonl(lines)?.as_bytes())?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ResultLine>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Run records of a results file; summary lines are dropped.
pub fn runs_of(lines: Vec<ResultLine>) -> Vec<RunRecord> {
    lines
        .into_iter()
        .filter_map(|l| match l {
            ResultLine::Run(r) => Some(r),
            ResultLine::Summary(_) => None,
        })
        .collect()
}

/// Left-aligned first column, right-aligned others.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule);
    for row in rows {
        line(row);
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "-".into())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Mean (std) per task, mode and K, in percent.
pub fn main_table(summary: &[SummaryRow]) -> String {
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.task.clone(),
                s.mode.to_string(),
                s.k.to_string(),
                s.metric.clone(),
                s.runs.to_string(),
                format!("{} ({})", pct(s.mean), pct(s.std)),
            ]
        })
        .collect();
    table(&strings(&["task", "mode", "K", "metric", "runs", "mean (std)"]), &rows)
}

/// Chosen λ0 per seed, one row per group.
pub fn lambda_table(records: &[RunRecord]) -> String {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut header = strings(&["task", "mode", "K"]);
    header.extend(seeds.iter().map(|s| format!("seed {s}")));
    let rows: Vec<Vec<String>> = summarize(records)
        .iter()
        .map(|s| {
            let mut row = vec![s.task.clone(), s.mode.to_string(), s.k.to_string()];
            for seed in &seeds {
                row.push(
                    s.seeds
                        .iter()
                        .position(|x| x == seed)
                        .map(|i| format!("{:.3}", s.lambda0[i]))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            row
        })
        .collect();
    table(&header, &rows)
}

/// O.M, U.R, U.M and D.M per group, means over seeds, in percent.
pub fn reject_table(summary: &[SummaryRow]) -> String {
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.task.clone(),
                s.mode.to_string(),
                s.k.to_string(),
                pct(s.mean),
                pct(s.unanimous_ratio),
                opt_pct(s.unanimous_metric),
                opt_pct(s.disagreed_metric),
            ]
        })
        .collect();
    table(&strings(&["task", "mode", "K", "O.M", "U.R", "U.M", "D.M"]), &rows)
}

/// All three tables.
pub fn render(records: &[RunRecord]) -> String {
    let summary = summarize(records);
    format!(
        "{}\nchosen lambda0 per seed\n{}\nunanimous / disagreed\n{}",
        main_table(&summary),
        lambda_table(records),
        reject_table(&summary)
    )
}

/// Records followed by their summary rows.
pub fn result_lines(records: &[RunRecord]) -> Vec<ResultLine> {
    let mut lines: Vec<ResultLine> = records.iter().cloned().map(ResultLine::Run).collect();
    lines.extend(summarize(records).into_iter().map(ResultLine::Summary));
    lines
}

/// Refuses to silently mix runs into an existing results file.
pub fn ensure_absent(path: &Path) -> Result<()> {
    if path.exists() {
        bail!("{} already exists", path.display());
    }
    Ok(())
}
