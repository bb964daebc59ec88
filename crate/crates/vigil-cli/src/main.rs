//! `vigil` — train, evaluate and run 3-class comment classifiers
//! (clean / offensive / hate) for Vietnamese social-media text.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vigil_core::error::Error;
use vigil_core::model::ModelKind;
use vigil_core::train::ClassWeighting;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Hate-speech classifiers for Vietnamese social-media text"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a JSON config; writes checkpoint, history and report
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset CSV
    Eval(EvalArgs),
    /// Classify a CSV or stdin lines with a trained checkpoint
    Predict(PredictArgs),
    /// Run the built-in gradient and oracle verification suite
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Architecture: textcnn, bigru-cnn or bigru-lstm-cnn
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pre-trained .vec word vectors
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Multi-syllable word list for compound joining
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Loss weighting: none or inverse
    #[arg(long = "class-weights")]
    class_weights: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`
    checkpoint: PathBuf,
    /// Labeled dataset CSV
    dataset: PathBuf,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint directory written by `train`
    checkpoint: PathBuf,
    /// Input CSV with a text column; omit to read plain lines from stdin
    input: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Corrupt the named gradient check to prove the suite can fail
    #[arg(long, hide = true)]
    sabotage: Option<String>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Format { .. } | Error::Io(_) | Error::Corrupt(_) => 3,
        Error::Numeric(_) | Error::Shape { .. } | Error::Contract(_) | Error::Oracle(_) => 4,
    }
}

fn category(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Data(_) | Error::Format { .. } | Error::Io(_) | Error::Corrupt(_) => "data",
        _ => "numeric",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result: Result<(), Error> = match &cli.cmd {
        Cmd::Train(args) => run_train(args),
        Cmd::Eval(args) => commands::cmd_eval(&args.checkpoint, &args.dataset, &args.out_dir),
        Cmd::Predict(args) => commands::cmd_predict(&args.checkpoint, args.input.as_deref()),
        Cmd::Verify(args) => {
            return ExitCode::from(commands::cmd_verify(args.sabotage.as_deref()) as u8)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}: {err}", category(&err));
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run_train(args: &TrainArgs) -> Result<(), Error> {
    let overrides = Overrides {
        model: args
            .model
            .as_deref()
            .map(ModelKind::parse_cli)
            .transpose()?,
        seed: args.seed,
        vectors: args.vectors.clone(),
        lexicon: args.lexicon.clone(),
        out_dir: args.out_dir.clone(),
        class_weights: args
            .class_weights
            .as_deref()
            .map(|s| match s {
                "none" => Ok(ClassWeighting::None),
                "inverse" => Ok(ClassWeighting::InverseFrequency),
                other => Err(Error::Config(format!(
                    "unknown class-weights value '{other}'; expected none or inverse"
                ))),
            })
            .transpose()?,
    };
    let cfg = RunConfig::load(&args.config, &overrides)?;
    commands::cmd_train(&cfg)
}
