//! `refline` — train, apply, and inspect line-level reference extractors.
//!
//! Subcommands cover the full workflow: `synthgen` produces labeled corpora,
//! `train` fits a model, `extract`/`label` apply it, `eval` scores it, and
//! `features` dumps the fired feature names for debugging.
//!
//! Exit codes are stable: 0 success; 3 training stopped at the iteration cap
//! without converging (the model is still written); 10 configuration or
//! usage errors; 11 I/O failures; 12 corpus errors; 13 model-file errors;
//! 14 runtime failures.

mod commands;
mod corpus_io;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_NON_CONVERGENCE: u8 = 3;
pub const EXIT_CONFIG: u8 = 10;
pub const EXIT_IO: u8 = 11;
pub const EXIT_CORPUS: u8 = 12;
pub const EXIT_MODEL: u8 = 13;
pub const EXIT_RUNTIME: u8 = 14;

/// A categorized failure: message for stderr plus the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn corpus(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_CORPUS,
            message: message.into(),
        }
    }

    pub fn model(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_MODEL,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<refline::corpus::CorpusError> for CliError {
    fn from(err: refline::corpus::CorpusError) -> CliError {
        use refline::corpus::CorpusError;
        match err {
            CorpusError::Io(e) => CliError::io(e.to_string()),
            CorpusError::EmptyFile => CliError::corpus("empty corpus"),
            other => CliError::corpus(other.to_string()),
        }
    }
}

impl From<refline::model_io::ModelIoError> for CliError {
    fn from(err: refline::model_io::ModelIoError) -> CliError {
        use refline::model_io::ModelIoError;
        match err {
            ModelIoError::Io(e) => CliError::io(e.to_string()),
            other => CliError::model(other.to_string()),
        }
    }
}

impl From<refline::train::TrainError> for CliError {
    fn from(err: refline::train::TrainError) -> CliError {
        use refline::train::TrainError;
        match err {
            TrainError::EmptyCorpus => CliError::corpus("empty corpus"),
            TrainError::InvalidConfig(_) | TrainError::Feature(_) => {
                CliError::config(err.to_string())
            }
            TrainError::FoldCount { .. } => CliError::config(err.to_string()),
            TrainError::InvalidDocument { .. } => CliError::corpus(err.to_string()),
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<refline::extract::ExtractError> for CliError {
    fn from(err: refline::extract::ExtractError) -> CliError {
        CliError::runtime(err.to_string())
    }
}

impl From<refline::synth::GenError> for CliError {
    fn from(err: refline::synth::GenError) -> CliError {
        CliError::config(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        // A closed stdout (e.g. piping into `head`) is not a failure.
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError {
                code: 0,
                message: String::new(),
            };
        }
        CliError::io(err.to_string())
    }
}

/// Decode-constraint toggle as a flag value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "lower")]
pub enum Toggle {
    On,
    Off,
}

/// Corpus file format, normally sniffed from the extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "lower")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

#[derive(Debug, Parser)]
#[command(
    name = "refline",
    version,
    about = "Extracts bibliographic reference strings by labeling document lines with a CRF"
)]
pub struct Cli {
    /// JSON settings file (features, training, order, constraints).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Markov order of the label chain (1..=3); overrides the config file.
    #[arg(long, global = true)]
    pub order: Option<usize>,

    /// Seed for stochastic components; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Force BIO decode constraints on or off; overrides the config file
    /// and the model's own default.
    #[arg(long, global = true, value_enum)]
    pub constraints: Option<Toggle>,

    /// Worker threads for per-document stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Corpus format when the file extension is not .jsonl or .tsv.
    #[arg(long, global = true, value_enum)]
    pub format: Option<CorpusFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a labeled corpus and write it with a training report.
    Train(TrainArgs),
    /// Decode documents and write grouped reference strings as JSONL.
    Extract(ExtractArgs),
    /// Decode documents and write per-line predicted labels as TSV.
    Label(LabelArgs),
    /// Score a model on a labeled corpus, or cross-validate a configuration.
    Eval(EvalArgs),
    /// Dump the fired feature names of corpus lines.
    Features(FeaturesArgs),
    /// Generate a deterministic synthetic labeled corpus.
    Synthgen(SynthgenArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled corpus files; concatenated in argument order.
    #[arg(required = true, value_name = "CORPUS")]
    pub corpus: Vec<PathBuf>,

    /// Where to write the model file. A JSON training report is written
    /// beside it with the extension `report.json`.
    #[arg(long, value_name = "FILE")]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Input documents (labels, if present, are ignored).
    #[arg(value_name = "CORPUS")]
    pub input: PathBuf,

    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    /// Output JSONL path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Input documents; gold labels, when present, are echoed for comparison.
    #[arg(value_name = "CORPUS")]
    pub input: PathBuf,

    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    /// Output TSV path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled corpus to score against.
    #[arg(value_name = "CORPUS")]
    pub input: PathBuf,

    /// Score this trained model on the corpus.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Cross-validate the current configuration with this many folds
    /// instead of scoring an existing model.
    #[arg(long, value_name = "K")]
    pub kfold: Option<usize>,

    /// Score the gold labels against themselves (sanity check; all 1.0).
    #[arg(long)]
    pub self_eval: bool,

    /// Also write the metrics as JSON to this path.
    #[arg(long, value_name = "FILE")]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Corpus whose lines to featurize.
    #[arg(value_name = "CORPUS")]
    pub input: PathBuf,

    /// Restrict the dump to one line, written as `<doc_id>:<line_index>`.
    #[arg(long, value_name = "DOC:IDX")]
    pub line: Option<String>,
}

/// Reference style exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum StyleArg {
    Numbered,
    AuthorYear,
    Mixed,
}

/// Generator mode exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    EndSection,
    Footnotes,
}

#[derive(Debug, Args)]
pub struct SynthgenArgs {
    /// Output corpus path (JSONL); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Number of documents to generate.
    #[arg(long, value_name = "N")]
    pub n_documents: Option<usize>,

    /// Where references live: a terminal section or per-page footnotes.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Reference marker style.
    #[arg(long, value_enum)]
    pub style: Option<StyleArg>,

    /// Body lines per page, as an inclusive range `lo,hi`.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    pub body_lines: Option<(usize, usize)>,

    /// References per document, as an inclusive range `lo,hi`.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    pub references: Option<(usize, usize)>,

    /// Page height in lines; small values force page-split references.
    #[arg(long, value_name = "N")]
    pub page_height: Option<usize>,

    /// Probability of hyphenating a wrapped reference line break.
    #[arg(long, value_name = "P")]
    pub hyphenation: Option<f64>,
}

fn parse_range(raw: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got {raw:?}"))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    Ok((lo, hi))
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let settings = settings::resolve(cli)?;
    match &cli.command {
        Command::Train(args) => commands::train(cli, &settings, args),
        Command::Extract(args) => commands::extract(cli, &settings, args),
        Command::Label(args) => commands::label(cli, &settings, args),
        Command::Eval(args) => commands::eval(cli, &settings, args),
        Command::Features(args) => commands::features(cli, &settings, args),
        Command::Synthgen(args) => commands::synthgen(cli, &settings, args),
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match cli.jobs {
        None => dispatch(cli),
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?
            .install(|| dispatch(cli)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            if !err.message.is_empty() {
                eprintln!("error: {}", err.message);
            }
            ExitCode::from(err.code)
        }
    }
}
