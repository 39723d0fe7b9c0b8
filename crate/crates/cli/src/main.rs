//! `lfmmi`: corpus generation, training, adaptation, decoding, scoring and
//! the full experiment from the command line.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid config or argument, 4 I/O or
//! file format, 5 data (corrupt archive, missing record, id mismatch,
//! infeasible supervision), 6 numerical failure. Failures print one JSON
//! object on stderr: `{"error": kind, "message": text, "details": [...]}`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfmmi_adapt::Error;

#[derive(Parser)]
#[command(name = "lfmmi", version, about = "LF-MMI training and LHUC-family speaker adaptation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Accepted both before and after the subcommand. Not a clap global arg:
/// globals keep only the values given after the subcommand.
#[derive(Args, Clone, Default)]
pub struct Common {
    /// Flat `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides one config key; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    /// `self` as given before the subcommand, `local` after it.
    fn then(&self, local: Common) -> Common {
        Common {
            config: local.config.or_else(|| self.config.clone()),
            overrides: self.overrides.iter().cloned().chain(local.overrides).collect(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Prints the effective configuration (every key with its value).
    Config(Common),
    /// Generates a synthetic corpus.
    Generate {
        #[command(flatten)]
        local: Common,
        #[arg(long, default_value = "train")]
        split: String,
        /// Speaker count; defaults to the config's count for the split.
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the speaker-independent model.
    Train {
        #[command(flatten)]
        local: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speaker-adaptive training; fine-tunes `--init` when given.
    Sat {
        #[command(flatten)]
        local: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimates one adapter per test speaker.
    Adapt(commands::AdaptArgs),
    /// Decodes a corpus, optionally with per-speaker adapters.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        adapters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores a hypothesis file against the corpus references.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Writes the score JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emits a metrics JSON file in other formats.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        /// Comma-separated subset of json,csv,plotdata.
        #[arg(long, default_value = "json,csv,plotdata")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the whole experiment and writes every report format.
    Experiment {
        #[command(flatten)]
        local: Common,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints an adapter file as text.
    ShowAdapter { path: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidConfig(_) => 3,
        Error::Io(_) | Error::Json(_) | Error::Format { .. } => 4,
        Error::NonFiniteGradient { .. } => 6,
        _ => 5,
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let details: Vec<String> = match e {
        Error::InvalidConfig(v) => v.clone(),
        Error::IdMismatch { missing_hyp, missing_ref } => missing_hyp
            .iter()
            .map(|id| format!("missing hypothesis: {id}"))
            .chain(missing_ref.iter().map(|id| format!("missing reference: {id}")))
            .collect(),
        Error::MissingRecord(id) => vec![id.clone()],
        _ => Vec::new(),
    };
    serde_json::json!({ "error": e.kind(), "message": e.to_string(), "details": details })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let top = cli.common;
    let result = match cli.command {
        Command::Config(local) => commands::config(&top.then(local)),
        Command::Generate { local, split, speakers, out } => commands::generate(&top.then(local), &split, speakers, &out),
        Command::Train { local, corpus, out } => commands::train(&top.then(local), &corpus, &out),
        Command::Sat { local, corpus, init, out } => commands::sat(&top.then(local), &corpus, init.as_deref(), &out),
        Command::Adapt(args) => commands::adapt(&top.then(args.common.clone()), &args),
        Command::Decode {
            model,
            corpus,
            adapters,
            out,
        } => commands::decode(&model, &corpus, adapters.as_deref(), &out),
        Command::Score { corpus, hyps, out } => commands::score(&corpus, &hyps, out.as_deref()),
        Command::Report { metrics, format, out } => commands::report(&metrics, &format, &out),
        Command::Experiment { local, out } => commands::experiment(&top.then(local), out),
        Command::ShowAdapter { path } => commands::show_adapter(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
