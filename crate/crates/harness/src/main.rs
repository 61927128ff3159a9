use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semscore::{compute_idf_from_examples, reject_report, Classifier, IdfTable, InputExample, TaskSpec, DEFAULT_SEEDS};
use semscore_harness::experiment::checkpoint_path;
use semscore_harness::report::{append_jsonl, read_jsonl, runs_of};
use semscore_harness::{
    cache_dir, load_or_pretrain, pretrain, read_dataset, read_task_dir, render, resolve_task, result_lines,
    run_experiment, task_words, weighting_for, write_dataset, ExperimentConfig, ExperimentInputs, HarnessConfig,
    LoadedModel, Mode,
};
use semscore_toylm::{SyntheticConfig, SyntheticData};

#[derive(Parser)]
#[command(name = "semscore", version, about = "Few-shot classification by semantic consistency scoring")]
struct Cli {
    /// Settings file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a toy discriminator with replaced token detection.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        /// Plain-text corpus, one sentence per line [default: <data-dir>/corpus.txt, else train.tsv sentences].
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute IDF weights of the training file.
    Idf {
        #[command(flatten)]
        data: DataArgs,
        /// Output file (token TAB weight); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Few-shot runs for every seed and K.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "16")]
        k: Vec<usize>,
    },
    /// Score the test file with a saved model at a fixed λ0.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Model directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        #[arg(long)]
        lambda0: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Per-example predictions (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Like `train`, over a range of K.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
        k: Vec<usize>,
    },
    /// Print the tables of a results file.
    Report {
        /// Results file written by `train` or `sweep`.
        results: PathBuf,
    },
    /// Write the synthetic sentiment task to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Built-in task name or task TOML file.
    #[arg(long)]
    task: String,
    /// Directory with train.tsv and test.tsv.
    #[arg(long)]
    data_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS.to_vec())]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Fixed λ0; skips the grid search.
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Results file (JSON lines); appended to.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model directory; without it a model is pretrained (or reused from the cache).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Plain-text pretraining corpus when no model is given.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Keep each run's finetuned model under this directory.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn sentences(examples: &[InputExample]) -> Vec<String> {
    examples
        .iter()
        .flat_map(|e| std::iter::once(e.sentence1.clone()).chain(e.sentence2.clone()))
        .collect()
}

fn corpus_for(corpus: Option<&Path>, data_dir: &Path, train: &[InputExample]) -> Result<Vec<String>> {
    let default = data_dir.join("corpus.txt");
    match corpus {
        Some(p) => read_lines(p),
        None if default.is_file() => read_lines(&default),
        None => Ok(sentences(train)),
    }
}

/// Vocabulary extras: task words plus every sentence the model will see.
fn extras(spec: &TaskSpec, train: &[InputExample], test: &[InputExample]) -> Vec<String> {
    let mut extra = task_words(spec);
    extra.extend(sentences(train));
    extra.extend(sentences(test));
    extra
}

fn run(args: RunArgs, ks: Vec<usize>, harness: &HarnessConfig) -> Result<()> {
    let spec = resolve_task(&args.data.task)?;
    let (pool, test) = read_task_dir(&args.data.data_dir, &spec)?;
    let model = match &args.model {
        Some(dir) => LoadedModel::load(dir)?,
        None => {
            let corpus = corpus_for(args.corpus.as_deref(), &args.data.data_dir, &pool)?;
            load_or_pretrain(&corpus, &extras(&spec, &pool, &test), harness, &cache_dir())?
        }
    };
    model.check_task(&spec)?;
    let config = ExperimentConfig {
        seeds: args.seeds,
        ks,
        mode: args.mode,
        lambda0: args.lambda0,
        max_len: args.max_len.unwrap_or(harness.max_len),
        train: harness.train.clone(),
        ..ExperimentConfig::default()
    };
    let inputs = ExperimentInputs {
        spec: &spec,
        tokenizer: Arc::new(model.tokenizer.clone()),
        pool: &pool,
        test: &test,
        scorer: &model.model,
        scorer_id: &model.id,
    };
    let records = run_experiment(&inputs, &config, |out| {
        let r = &out.record;
        eprintln!(
            "{} {} K={} seed={} lambda0={:.3} {}={:.4}",
            r.task, r.mode, r.k, r.seed, r.lambda0, r.metric, r.overall
        );
        if let Some(dir) = &args.out {
            append_jsonl(dir, &[semscore_harness::ResultLine::Run(r.clone())])?;
        }
        if let Some(dir) = &args.checkpoints {
            let path = checkpoint_path(dir, r);
            out.scorer.save_dir(&path, &model.tokenizer, r.seed)?;
            fs::write(path.join("run.json"), serde_json::to_string_pretty(r)?)?;
        }
        Ok(())
    })?;
    if let Some(path) = &args.out {
        let summaries: Vec<_> = result_lines(&records)
            .into_iter()
            .filter(|l| matches!(l, semscore_harness::ResultLine::Summary(_)))
            .collect();
        append_jsonl(path, &summaries)?;
    }
    print!("{}", render(&records));
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let harness = HarnessConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Pretrain { data, corpus, out } => {
            let spec = resolve_task(&data.task)?;
            let (train, test) = read_task_dir(&data.data_dir, &spec)?;
            let corpus = corpus_for(corpus.as_deref(), &data.data_dir, &train)?;
            let (model, trace) = pretrain(&corpus, &extras(&spec, &train, &test), &harness)?;
            model.save(&out, harness.pretrain.seed)?;
            let tail = trace.losses.len().saturating_sub(100);
            let last = &trace.losses[tail..];
            let mean = last.iter().sum::<f64>() / last.len().max(1) as f64;
            println!(
                "pretrained {} parameters for {} steps; final loss {mean:.4}; saved to {}",
                model.model.num_parameters(),
                trace.losses.len(),
                out.display()
            );
        }
        Command::Idf { data, out } => {
            let spec = resolve_task(&data.task)?;
            let train = read_dataset(&data.data_dir.join("train.tsv"), &spec)?;
            let table: IdfTable<f64> = compute_idf_from_examples(&train)?;
            match out {
                Some(path) => table.save(&path)?,
                None => print!("{}", table.to_text()),
            }
        }
        Command::Train { run: args, k } | Command::Sweep { run: args, k } => run(args, k, &harness)?,
        Command::Eval {
            data,
            model,
            mode,
            lambda0,
            max_len,
            out,
        } => {
            let spec = resolve_task(&data.task)?;
            let (pool, test) = read_task_dir(&data.data_dir, &spec)?;
            let model = LoadedModel::load(&model)?;
            model.check_task(&spec)?;
            let lambda0 = match (mode, lambda0) {
                (Mode::LabelOnly, _) => 1.0,
                (_, Some(l)) => l,
                (_, None) => bail!("eval needs --lambda0 unless --mode label-only"),
            };
            let classifier = Classifier::new(
                spec.clone(),
                Arc::new(model.tokenizer.clone()),
                weighting_for(mode, &pool)?,
                lambda0,
                max_len.unwrap_or(harness.max_len),
            )?;
            let results = classifier.predict_all(&test, &model.model)?;
            let golds: Vec<usize> = test.iter().map(|e| e.gold.context("unlabelled test example")).collect::<Result<_>>()?;
            let report = reject_report(&results, &golds, &spec)?;
            let opt = |v: Option<f64>| v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "-".into());
            println!(
                "{} {}: O.M {:.4}  U.R {:.4}  U.M {}  D.M {}  ({} examples)",
                spec.name,
                spec.metric,
                report.overall,
                report.unanimous_ratio,
                opt(report.unanimous_metric),
                opt(report.disagreed_metric),
                report.total
            );
            if let Some(path) = out {
                let mut text = String::new();
                for (r, g) in results.iter().zip(&golds) {
                    let line = serde_json::json!({
                        "predicted": r.predicted,
                        "gold": g,
                        "sc": r.sc,
                        "unanimous": r.unanimous,
                    });
                    text.push_str(&line.to_string());
                    text.push('\n');
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Report { results } => print!("{}", render(&runs_of(read_jsonl(&results)?))),
        Command::Synth { out, data_seed } => {
            let data = SyntheticData::generate(&SyntheticConfig {
                data_seed,
                ..SyntheticConfig::default()
            });
            fs::create_dir_all(&out)?;
            write_dataset(&out.join("train.tsv"), &data.pool, &data.spec)?;
            write_dataset(&out.join("test.tsv"), &data.test, &data.spec)?;
            fs::write(out.join("corpus.txt"), data.corpus.join("\n") + "\n")?;
            fs::write(out.join("task.toml"), data.spec.to_toml()?)?;
            fs::write(out.join("harness.toml"), HarnessConfig::toy().to_toml()?)?;
            println!("wrote the synthetic task to {}", out.display());
        }
    }
    Ok(())
}
