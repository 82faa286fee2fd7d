use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mhlat::check::{check_pipeline, CheckOptions, Fault};
use mhlat::checkpoint::Bundle;
use mhlat::data::{build_vocab, generate_corpus, load_jsonl, save_jsonl, GeneratorConfig};
use mhlat::metrics::DEFAULT_KS;
use mhlat::train::{evaluate, prepare, train, write_attention_csv, write_predictions, TrainOptions};
use mhlat::{Error, Exec, Model, ModelConfig, TuningMode};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser)]
#[command(name = "mhlat", version, about = "Multi-hop label-wise attention for long-document multi-label classification")]
struct Cli {
    /// Run every per-document loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-signal corpus (train.jsonl, dev.jsonl, labels.txt).
    Generate(GenerateArgs),
    /// Train a model and write the best-dev checkpoint bundle.
    Train(TrainArgs),
    /// Score a JSONL file with a checkpoint and write a metrics report.
    Eval(EvalArgs),
    /// Finite-difference check of the full pipeline on a random document.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    docs: usize,
    #[arg(long, default_value_t = 20)]
    labels: usize,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    #[arg(long, default_value_t = 3)]
    planted_len: usize,
    /// Zipf exponent for label popularity (uniform when absent).
    #[arg(long)]
    zipf: Option<f64>,
    /// Share of documents held out as dev.
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON object with ModelConfig fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
    #[arg(long, default_value_t = mhlat::train::DEFAULT_PATIENCE)]
    patience: usize,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// JSON metrics report.
    #[arg(long)]
    report: PathBuf,
    /// Per-document probabilities and predicted labels, JSONL.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Top attended positions per (document, label), CSV.
    #[arg(long)]
    attention: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    ks: Vec<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Defaults to L=8, d_m=8, B=1, C=5, N=2.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Check every tuning mode instead of the configured one.
    #[arg(long)]
    all_modes: bool,
    #[arg(long, default_value_t = 24)]
    tokens: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Scale the analytic gradient of this parameter by 1.5.
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

fn small_config() -> ModelConfig {
    ModelConfig {
        chunk_len: 8,
        d_model: 8,
        blocks: 1,
        labels: 5,
        hops: 2,
        ..Default::default()
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => run_train(a, exec),
        Command::Eval(a) => run_eval(a, exec),
        Command::Gradcheck(a) => gradcheck(a, exec),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<u8> {
    if !(0.0..1.0).contains(&a.dev_fraction) {
        return Err(Error::Config("dev-fraction must lie in [0, 1)".into()).into());
    }
    let corpus = generate_corpus(&GeneratorConfig {
        seed: a.seed,
        docs: a.docs,
        labels: a.labels,
        max_len: a.max_len,
        planted_len: a.planted_len,
        zipf: a.zipf,
        ..Default::default()
    })?;
    let dev_len = (a.docs as f64 * a.dev_fraction).round() as usize;
    let (train, dev) = corpus.examples.split_at(a.docs - dev_len);
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_jsonl(a.out.join("train.jsonl"), train)?;
    save_jsonl(a.out.join("dev.jsonl"), dev)?;
    corpus.label_space.save(a.out.join("labels.txt"))?;
    println!(
        "wrote {} train / {} dev documents over {} labels to {}",
        train.len(),
        dev.len(),
        corpus.label_space.len(),
        a.out.display()
    );
    Ok(0)
}

fn run_train(a: TrainArgs, exec: Exec) -> anyhow::Result<u8> {
    let mut config = ModelConfig::load(&a.config)?;
    if a.min_freq < 1 {
        return Err(Error::Config("min-freq must be at least 1".into()).into());
    }
    let (train_ex, labels) = load_jsonl(&a.train, None)?;
    let (dev_ex, _) = load_jsonl(&a.dev, Some(&labels))?;
    if config.labels == 0 {
        config.labels = labels.len();
    } else if config.labels != labels.len() {
        return Err(Error::LabelSpaceMismatch {
            expected: config.labels,
            found: labels.len(),
        }
        .into());
    }
    let vocab = build_vocab(&train_ex, a.min_freq);
    let train_docs = prepare(&train_ex, &vocab, &labels, config.chunk_len)?;
    let dev_docs = prepare(&dev_ex, &vocab, &labels, config.chunk_len)?;
    let model = Model::init(&config, vocab.len())?;

    let quiet = a.quiet;
    let outcome = train(
        model,
        &train_docs,
        &dev_docs,
        TrainOptions {
            patience: a.patience,
            exec,
        },
        |log| {
            if !quiet {
                println!(
                    "epoch {:>3}  loss {:.5}  dev micro-F1 {:.4}{}",
                    log.epoch,
                    log.train_loss,
                    log.dev_micro_f1,
                    if log.improved { "  *" } else { "" }
                );
            }
        },
    )?;

    let bundle = Bundle {
        model: outcome.best,
        vocab,
        labels,
    };
    bundle.save(&a.out)?;
    let history = serde_json::to_string_pretty(&outcome.history).context("serializing history")?;
    std::fs::write(a.out.join("history.json"), history + "\n")?;
    println!(
        "best dev micro-F1 {:.4} at epoch {}; checkpoint in {}",
        outcome.best_dev_micro_f1,
        outcome.best_epoch,
        a.out.display()
    );
    Ok(0)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run_eval(a: EvalArgs, exec: Exec) -> anyhow::Result<u8> {
    let bundle = Bundle::load(&a.ckpt)?;
    let (examples, _) = load_jsonl(&a.data, Some(&bundle.labels))?;
    let docs = prepare(&examples, &bundle.vocab, &bundle.labels, bundle.model.config().chunk_len)?;
    let eval = evaluate(&bundle.model, &docs, &a.ks, exec)?;
    std::fs::write(&a.report, eval.report.to_json() + "\n")
        .with_context(|| format!("writing {}", a.report.display()))?;
    if let Some(p) = &a.predictions {
        write_predictions(create(p)?, &docs, &eval, &bundle.labels)?;
    }
    if let Some(p) = &a.attention {
        write_attention_csv(create(p)?, &bundle.model, &docs, &bundle.labels, a.top, exec)?;
    }
    print!("{}", eval.report.to_text());
    Ok(0)
}

fn gradcheck(a: GradcheckArgs, exec: Exec) -> anyhow::Result<u8> {
    let config = match &a.config {
        Some(p) => ModelConfig::load(p)?,
        None => small_config(),
    };
    if config.labels == 0 || config.labels > 6 || config.d_model > 8 || a.tokens == 0 || a.tokens > 32 {
        bail!(Error::Config(
            "gradcheck needs a small config: 1 <= C <= 6, d_m <= 8, 1 <= tokens <= 32".into()
        ));
    }
    let modes = if a.all_modes {
        TuningMode::ALL.to_vec()
    } else {
        vec![config.tuning_mode]
    };
    let opts = CheckOptions {
        tokens: a.tokens,
        eps: a.eps,
        exec,
        fault: a.corrupt.map(|param| Fault { param, scale: 1.5 }),
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for mode in modes {
        let cfg = ModelConfig {
            tuning_mode: mode,
            ..config.clone()
        };
        let report = check_pipeline(&cfg, &opts)?;
        println!("[{mode}]");
        print!("{}", report.to_text());
        worst = worst.max(report.max_rel_error());
    }
    Ok(if worst < mhlat::check::PASS_THRESHOLD {
        0
    } else {
        EXIT_NUMERICAL
    })
}
