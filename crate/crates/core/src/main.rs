use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use wlcoref::cli::{self, TrainArgs};
use wlcoref::corpus::write_jsonl;
use wlcoref::metrics::OrderConvention;
use wlcoref::synth::{generate_corpus, SynthConfig};
use wlcoref::RunConfig;

#[derive(Parser)]
#[command(name = "wlcoref", version, about = "Word-level coreference resolution")]
struct Args {
    /// Run configuration file ([model] and [train] tables).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Antecedents kept per word after coarse scoring.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Weight of the pairwise binary cross-entropy loss.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Precomputed subtoken embeddings (WLEMB1); replaces the toy encoder.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Fraction of training documents held out when no --dev file is given.
    #[arg(long, global = true)]
    dev_split: Option<f64>,
    /// Span pair ordering for the audit: lexicographic or strictly-precedes.
    #[arg(long, global = true, default_value = "lexicographic")]
    order_convention: OrderConvention,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert gold span clusters to the word-level dataset.
    Transform { input: PathBuf, output: PathBuf },
    /// Train a model and write a checkpoint directory.
    Train {
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
    },
    /// Predict span clusters with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Score predictions against gold documents.
    Evaluate { gold: PathBuf, pred: PathBuf },
    /// Count mentions and mention pairs of both formulations.
    Audit { input: PathBuf },
    /// Check analytic gradients against finite differences.
    Gradcheck,
    /// Write a synthetic corpus.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 20)]
        docs: usize,
    },
}

fn run(args: Args) -> anyhow::Result<bool> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        config.set_seed(s);
    }
    if let Some(k) = args.k {
        config.model.k = k;
    }
    if let Some(a) = args.alpha {
        config.train.alpha = a;
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(d) = args.dev_split {
        config.train.dev_split = d;
    }
    config.validate()?;

    match args.command {
        Command::Transform { input, output } => {
            let out = cli::cmd_transform(&input, &output, &config)?;
            eprintln!("wrote {} documents to {}", out.len(), output.display());
        }
        Command::Train { train, out, dev } => {
            let outcome = cli::cmd_train(&TrainArgs {
                train,
                dev,
                out_dir: out.clone(),
                embeddings: args.embeddings,
                config_path: args.config.clone(),
                config,
            })?;
            eprintln!(
                "best epoch {} (dev span-level F1 {}); checkpoint in {}",
                outcome.best_epoch,
                outcome.best_sl_f1.map_or("n/a".into(), |f| format!("{f:.4}")),
                out.display()
            );
        }
        Command::Predict {
            checkpoint,
            input,
            output,
        } => {
            let out = cli::cmd_predict(&checkpoint, &input, &output, args.embeddings.as_deref(), args.k)?;
            eprintln!("wrote {} predictions to {}", out.len(), output.display());
        }
        Command::Evaluate { gold, pred } => {
            print!("{}", cli::cmd_evaluate(&gold, &pred, &config)?);
        }
        Command::Audit { input } => {
            println!("{}", cli::cmd_audit(&input, args.order_convention, &config)?);
        }
        Command::Gradcheck => {
            let table = cli::cmd_gradcheck(args.seed.unwrap_or(0))?;
            print!("{table}");
            return Ok(table.all_passed());
        }
        Command::Synth { output, docs } => {
            let corpus = generate_corpus(&SynthConfig {
                num_docs: docs,
                seed: args.seed.unwrap_or(SynthConfig::default().seed),
                ..Default::default()
            });
            write_jsonl(&output, &corpus)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
