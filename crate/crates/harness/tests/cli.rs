use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semscore_harness::report::{read_jsonl, runs_of};
use semscore_harness::{Mode, ResultLine};

const TINY: &str = "max_len = 64

[train]
learning_rate = 0.001
epochs = 2
eval_every = 8

[encoder]
embedding_dim = 8
heads = 2
ffn_dim = 16
max_positions = 64

[pretrain]
steps = 40
";

fn semscore(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_semscore"))
        .current_dir(dir)
        .env("SEMSCORE_CACHE", dir.join("cache"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "semscore {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    semscore(dir.path(), &["synth", "--out", "data"]);
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn stripped(path: &Path) -> Vec<ResultLine> {
    read_jsonl(path)
        .unwrap()
        .into_iter()
        .map(|l| match l {
            ResultLine::Run(r) => ResultLine::Run(r.without_timestamps()),
            other => other,
        })
        .collect()
}

#[test]
fn repeated_train_runs_write_identical_results() {
    let dir = setup();
    let p = dir.path();
    for out in ["a.jsonl", "b.jsonl"] {
        semscore(
            p,
            &[
                "--config", "tiny.toml", "train", "--task", "data/task.toml", "--data-dir", "data", "--seeds",
                "13,21", "--k", "4", "--out", out,
            ],
        );
    }
    let a = stripped(&p.join("a.jsonl"));
    assert_eq!(a, stripped(&p.join("b.jsonl")));
    let runs = runs_of(a.clone());
    assert_eq!(runs.len(), 2);
    assert_eq!(a.len(), 3, "two runs and one summary");
    for r in &runs {
        assert_eq!(r.grid.len(), 31);
        assert_eq!(r.test_size, 1000);
        assert!((0.0..=1.0).contains(&r.overall));
        let count = r.unanimous_ratio * r.test_size as f64;
        assert!((count - r.unanimous_count as f64).abs() < 1e-9);
    }
    // pretrained once, then reused from the cache
    assert_eq!(fs::read_dir(p.join("cache")).unwrap().count(), 1);

    let report = semscore(p, &["report", "a.jsonl"]);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("seed 13") && text.contains("D.M"));
}

#[test]
fn label_only_mode_skips_the_grid_and_checkpoints_evaluate() {
    let dir = setup();
    let p = dir.path();
    semscore(
        p,
        &[
            "--config", "tiny.toml", "pretrain", "--task", "data/task.toml", "--data-dir", "data", "--out", "model",
        ],
    );
    semscore(
        p,
        &[
            "--config", "tiny.toml", "train", "--task", "data/task.toml", "--data-dir", "data", "--model", "model",
            "--seeds", "42", "--k", "4", "--mode", "label-only", "--out", "r.jsonl", "--checkpoints", "ck",
        ],
    );
    let runs = runs_of(read_jsonl(&p.join("r.jsonl")).unwrap());
    assert_eq!(runs[0].mode, Mode::LabelOnly);
    assert_eq!(runs[0].lambda0, 1.0);
    assert!(runs[0].grid.is_empty());

    let eval = semscore(
        p,
        &[
            "--config", "tiny.toml", "eval", "--task", "data/task.toml", "--data-dir", "data", "--model",
            "ck/synthetic-label-only-k4-seed42", "--mode", "label-only", "--out", "pred.jsonl",
        ],
    );
    let line = String::from_utf8(eval.stdout).unwrap();
    assert!(line.contains(&format!("O.M {:.4}", runs[0].overall)), "{line}");
    assert_eq!(fs::read_to_string(p.join("pred.jsonl")).unwrap().lines().count(), 1000);
}

#[test]
fn idf_and_report_edge_cases() {
    let dir = setup();
    let p = dir.path();
    let idf = semscore(p, &["idf", "--task", "data/task.toml", "--data-dir", "data"]);
    let text = String::from_utf8(idf.stdout).unwrap();
    assert!(text.starts_with("#idf\tcorpus_size=1000"));
    for line in text.lines().skip(1) {
        let w: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&w));
    }

    fs::write(p.join("empty.jsonl"), "").unwrap();
    let report = semscore(p, &["report", "empty.jsonl"]);
    assert!(String::from_utf8(report.stdout).unwrap().contains("O.M"));
}

#[test]
fn missing_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_semscore"))
        .current_dir(dir.path())
        .args(["train", "--task", "sst-2", "--data-dir", "nowhere"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.tsv"));

    let out = Command::new(env!("CARGO_BIN_EXE_semscore"))
        .current_dir(dir.path())
        .args(["idf", "--task", "no-such-task", "--data-dir", "."])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
