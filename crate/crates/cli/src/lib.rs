//! The `grounding` command: one binary wiring world generation, the live
//! server, corpus tools, analysis, training and evaluation together.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use grounding_core::model::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "grounding",
    version,
    about = "Collaborative reference game toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Print summaries and reports as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML file with default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write generated worlds as JSON lines.
    Generate(GenerateArgs),
    /// Write scripted demo dialogues as transcript JSON lines.
    Synth(SynthArgs),
    /// Run the live game server.
    Serve(ServeArgs),
    /// Convert a released dialogue file into transcripts.
    Import(ImportArgs),
    /// Split transcripts 8:1:1 into train, valid and test files.
    Split(SplitArgs),
    /// Build the token vocabulary from training transcripts.
    Vocab(VocabArgs),
    /// Corpus statistics, nuanced-expression rates and selection bias.
    Analyze(AnalyzeArgs),
    /// Train one target-selection model.
    Train(TrainArgs),
    /// Evaluate trained models on the test split.
    Eval(EvalArgs),
    /// Run the invariant suites.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Shared dots per world (4, 5 or 6); drawn per world when omitted.
    #[arg(long)]
    pub num_shared: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding `transcripts.jsonl`.
    #[arg(long, default_value = "store")]
    pub store: PathBuf,
    /// Static browser client served at `/`.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Milliseconds between `tick` frames.
    #[arg(long, default_value_t = 1000)]
    pub tick_ms: u64,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Released file (JSON array or JSON lines).
    #[arg(long)]
    pub release: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// View circle center in release pixel coordinates, as `X,Y`.
    #[arg(long, default_value = "215,215")]
    pub view_center: String,
    #[arg(long, default_value_t = 200.0)]
    pub view_radius: f64,
    /// Drop records that fail to map instead of aborting.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory receiving train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Training transcripts.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = grounding_core::corpus::MIN_COUNT)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Directory for SVG bar charts.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Directory of nuance dictionaries; the shipped ones when omitted.
    #[arg(long)]
    pub dictionaries: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub variant: Variant,
    /// Directory with train.jsonl and valid.jsonl (and optionally vocab.json).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub init_range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of model files (every `*.json`, `*.bin` or `*.model`).
    #[arg(long)]
    pub models: PathBuf,
    /// Directory with test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub worlds_per_k: usize,
    #[arg(long, default_value_t = 1000)]
    pub logs: usize,
    #[arg(long, default_value_t = 3000)]
    pub baseline_dialogues: usize,
}

enum ParseError {
    Clap(clap::Error),
    Config(anyhow::Error),
}

fn parse(argv: Vec<OsString>) -> Result<Cli, ParseError> {
    let cmd = Cli::command();
    let matches = cmd
        .clone()
        .try_get_matches_from(&argv)
        .map_err(ParseError::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(ParseError::Clap)?;
    let Some(path) = &cli.global.config else {
        return Ok(cli);
    };
    let extra = config::extra_args(path, &cmd, &matches).map_err(ParseError::Config)?;
    if extra.is_empty() {
        return Ok(cli);
    }
    let mut full = argv;
    full.extend(extra);
    Cli::try_parse_from(full).map_err(ParseError::Clap)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

/// Run with the given arguments (program name first) and return the exit
/// code: 0 on success, 1 on failure, 2 on bad usage.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse(argv.into_iter().map(Into::into).collect()) {
        Ok(cli) => cli,
        Err(ParseError::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(ParseError::Config(e)) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    init_logging(cli.global.verbose);
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
