//! `treernn`: train, evaluate, and probe dependency-tree RNN sentence-pair
//! models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treernn_cli::commands;
use treernn_cli::config::{Overrides, RunConfig};
use treernn_cli::sick::Split;
use treernn_core::encoders::EncoderKind;
use treernn_core::error::{Error, Result};
use treernn_core::model::Task;

#[derive(Parser)]
#[command(
    name = "treernn",
    about = "Recursive neural networks over dependency trees for sentence-pair relatedness and entailment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Debug, Default)]
struct DataArgs {
    /// SICK-format tsv (pair_ID, sentence_A/B, relatedness_score, entailment_judgment[, SemEval_set])
    #[arg(long)]
    sick: Option<PathBuf>,
    /// CoNLL-U parses of every sentence_A, in record order
    #[arg(long)]
    conllu_a: Option<PathBuf>,
    /// CoNLL-U parses of every sentence_B, in record order
    #[arg(long)]
    conllu_b: Option<PathBuf>,
    /// Word vectors in GloVe text format
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a per-epoch CSV log
    Train {
        /// key = value config file; flags override its entries
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory for best.ckpt, final.ckpt, log.csv
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// relatedness | entailment
        #[arg(long)]
        task: Option<String>,
        /// typed | positional | relational | single
        #[arg(long)]
        encoder: Option<String>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        classifier_hidden: Option<usize>,
        #[arg(long)]
        hidden_size: Option<usize>,
        #[arg(long)]
        dep_embed_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Truncate relation subtypes at ':'
        #[arg(long)]
        coarse_relations: bool,
        /// Realize the L2 regularizer as an explicit loss term
        #[arg(long)]
        l2_in_loss: bool,
        /// Print the resolved configuration and exit
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate a checkpoint on one split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// train | trial | test
        #[arg(long, default_value = "test")]
        split: String,
        /// Guard: error out unless the checkpoint matches this task
        #[arg(long)]
        task: Option<String>,
    },
    /// Score or label sentence pairs from two aligned CoNLL-U files
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        conllu_a: PathBuf,
        #[arg(long)]
        conllu_b: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Verify autodiff gradients against finite differences
    Gradcheck {
        /// typed | positional | relational | single
        #[arg(long, default_value = "typed")]
        encoder: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one backward rule (negative control)
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Check SICK/CoNLL-U alignment by token-count heuristics
    Validate {
        #[arg(long)]
        sick: PathBuf,
        #[arg(long)]
        conllu_a: PathBuf,
        #[arg(long)]
        conllu_b: PathBuf,
    },
}

fn parse_task(s: &str) -> Result<Task> {
    Task::parse(s).ok_or_else(|| Error::Usage(format!("unknown task {s:?}")))
}

fn parse_encoder(s: &str) -> Result<EncoderKind> {
    EncoderKind::parse(s).ok_or_else(|| Error::Usage(format!("unknown encoder {s:?}")))
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).map_err(|_| Error::Usage(format!("unknown split {s:?}")))
}

fn data_config(data: &DataArgs) -> RunConfig {
    Overrides {
        sick: data.sick.clone(),
        conllu_a: data.conllu_a.clone(),
        conllu_b: data.conllu_b.clone(),
        embeddings: data.embeddings.clone(),
        ..Default::default()
    }
    .resolve()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out_dir,
            task,
            encoder,
            learning_rate,
            batch_size,
            classifier_hidden,
            hidden_size,
            dep_embed_size,
            epochs,
            weight_decay,
            seed,
            coarse_relations,
            l2_in_loss,
            dry_run,
        } => {
            let base = match config {
                Some(path) => Overrides::from_file(path)?,
                None => Overrides::default(),
            };
            let flags = Overrides {
                task: task.as_deref().map(parse_task).transpose()?,
                encoder: encoder.as_deref().map(parse_encoder).transpose()?,
                learning_rate,
                batch_size,
                classifier_hidden,
                hidden_size,
                dep_embed_size,
                epochs,
                weight_decay,
                seed,
                coarse_relations: coarse_relations.then_some(true),
                l2_in_loss: l2_in_loss.then_some(true),
                sick: data.sick,
                conllu_a: data.conllu_a,
                conllu_b: data.conllu_b,
                embeddings: data.embeddings,
                out_dir,
            };
            let cfg = base.overlaid_with(flags).resolve();
            commands::cmd_train(&cfg, dry_run)
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            task,
        } => {
            let cfg = data_config(&data);
            commands::cmd_eval(
                &checkpoint,
                &cfg,
                parse_split(&split)?,
                task.as_deref().map(parse_task).transpose()?,
            )
        }
        Command::Predict {
            checkpoint,
            conllu_a,
            conllu_b,
            embeddings,
        } => commands::cmd_predict(&checkpoint, &conllu_a, &conllu_b, &embeddings),
        Command::Gradcheck {
            encoder,
            seed,
            corrupt,
        } => commands::cmd_gradcheck(parse_encoder(&encoder)?, seed, corrupt),
        Command::Validate {
            sick,
            conllu_a,
            conllu_b,
        } => commands::cmd_validate(&sick, &conllu_a, &conllu_b),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(treernn_cli::exit_code(&error) as u8)
        }
    }
}
