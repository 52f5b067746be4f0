//! `genderbias` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 pipeline error,
//! 4 prediction endpoint failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genderbias::Error;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "genderbias", version, about = "Gender-occupation bias probes for NLI models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a balanced probe set from NLI corpora.
    Build(BuildArgs),
    /// Score a probe set against a model and write metrics and reports.
    Eval(EvalArgs),
    /// Write a corpus extended with gender-swapped copies.
    Augment(AugmentArgs),
    /// Compare two evaluation runs on the same probe set.
    Compare(CompareArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_occupation: Option<usize>,
    #[arg(long, value_parser = ["fixed", "premise_prefixed", "occupation_explicit"])]
    templates: Option<String>,
    /// `in` or `out`, recorded in the probe-set header.
    #[arg(long)]
    distribution: Option<String>,
    /// Input corpus (repeatable); replaces the config's corpus list.
    #[arg(long)]
    corpus: Vec<PathBuf>,
}

#[derive(Args)]
#[group(id = "backend", multiple = false)]
struct BackendArgs {
    /// Base URL of a prediction endpoint.
    #[arg(long, group = "backend")]
    endpoint: Option<String>,
    /// Offline prediction JSONL file.
    #[arg(long, group = "backend")]
    predictions: Option<PathBuf>,
    /// neutral_fair | stereotyped:<delta> | hash_noise:<seed>
    #[arg(long, group = "backend")]
    mock: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Probe-set file written by `build`.
    #[arg(long)]
    probes: Option<PathBuf>,
    /// Model tag used in cache keys, reports and file names.
    #[arg(long)]
    model: Option<String>,
    /// Evaluation-set name for reports (defaults to the probe file stem).
    #[arg(long)]
    eval_set: Option<String>,
    /// Prediction cache file (HTTP endpoint only).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = ["occupation_records", "all_records"])]
    scope: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directory before debiasing.
    before: PathBuf,
    /// Run directory after debiasing.
    after: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Build(a) => {
            let mut cfg = load_config(&a.common)?;
            cfg.seed = a.seed.or(cfg.seed);
            cfg.per_occupation = a.per_occupation.or(cfg.per_occupation);
            cfg.templates = a.templates.or(cfg.templates);
            cfg.distribution = a.distribution.or(cfg.distribution);
            if !a.corpus.is_empty() {
                cfg.corpus = a
                    .corpus
                    .into_iter()
                    .map(|path| config::CorpusEntry { path, format: None, source: None })
                    .collect();
            }
            commands::build(&cfg)
        }
        Command::Eval(a) => {
            let mut cfg = load_config(&a.common)?;
            let b = a.backend;
            if b.endpoint.is_some() || b.predictions.is_some() || b.mock.is_some() {
                cfg.endpoint.url = b.endpoint;
                cfg.endpoint.predictions = b.predictions;
                cfg.endpoint.mock = b.mock;
            }
            cfg.endpoint.model = a.model.or(cfg.endpoint.model);
            cfg.endpoint.cache = a.cache.or(cfg.endpoint.cache);
            cfg.eval.probes = a.probes.or(cfg.eval.probes);
            cfg.eval.eval_set = a.eval_set.or(cfg.eval.eval_set);
            commands::eval(&cfg)
        }
        Command::Augment(a) => {
            let mut cfg = load_config(&a.common)?;
            cfg.augment.input = a.input.or(cfg.augment.input);
            cfg.augment.output = a.output.or(cfg.augment.output);
            cfg.augment.scope = a.scope.or(cfg.augment.scope);
            commands::augment(&cfg)
        }
        Command::Compare(a) => commands::compare(&a.before, &a.after, a.out.as_deref()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. }
        | Error::FileNotFound(_)
        | Error::ProbeSetMismatch { .. }
        | Error::MissingRun(_)
        | Error::InvalidTemplate(_)
        | Error::DuplicateTerm(_)
        | Error::BadShare { .. }
        | Error::InvalidLexicon(_) => 2,
        Error::EndpointUnavailable { .. } | Error::SchemaMismatch(_) | Error::MissingPrediction { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
