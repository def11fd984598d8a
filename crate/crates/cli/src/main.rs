//! `lqm`: validate, score and analyze span-level MT error annotations.
//!
//! Exit codes: 0 success, 1 invalid input data, 2 usage error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lqm_core::analysis::Level;
use lqm_core::{Direction, Layer};

#[derive(Parser)]
#[command(name = "lqm", version, about = "Span-level MT quality evaluation with the LQM taxonomy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check segments, annotations and a taxonomy without computing anything.
    Validate(ValidateArgs),
    /// Severity-weighted segment and group scores.
    Score(ScoreArgs),
    /// Pairwise inter-annotator agreement.
    Iaa(IaaArgs),
    /// Sentence-level BLEU per segment and per group.
    Bleu(BleuArgs),
    /// Error distributions, model attribution, correlation and length buckets.
    Analyze(AnalyzeArgs),
    /// Write a server project's segments and annotations as JSONL.
    Export(ExportArgs),
    /// Run the annotation server.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
pub struct Inputs {
    /// Segments JSONL.
    #[arg(long)]
    segments: PathBuf,
    /// Taxonomy file, or the name of a built-in schema (lqm, mqm).
    #[arg(long, default_value = "lqm")]
    taxonomy: String,
}

#[derive(Args, Clone)]
pub struct Output {
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Force single-threaded execution.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Primary,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    All,
    Annotated,
}

#[derive(Args, Clone)]
pub struct Scoring {
    /// Severity weights as JSON: {"severity_weights": {...}, "type_weight": 1}.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Whose spans count on segments annotated more than once.
    #[arg(long, value_enum, default_value_t = SelectionArg::Primary)]
    selection: SelectionArg,
    /// Score every segment, or only those some annotator reviewed.
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    scope: ScopeArg,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Also require every span path to be complete for this layer.
    #[arg(long, value_parser = parse_layer)]
    layer: Option<Layer>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    annotations: PathBuf,
    #[command(flatten)]
    scoring: Scoring,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct IaaArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    annotations: PathBuf,
    /// The two annotators to compare, as A,B.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    annotators: Vec<String>,
    /// Characters two spans must share to be matched.
    #[arg(long, default_value_t = 1)]
    min_overlap: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct BleuArgs {
    #[arg(long)]
    segments: PathBuf,
    /// Segment field holding the hypothesis.
    #[arg(long, default_value = "target_text")]
    hyp_field: String,
    /// whitespace, pretok, or subword:<vocab file>.
    #[arg(long, default_value = "whitespace")]
    tok: String,
    /// Lowercase hypotheses and references before matching.
    #[arg(long)]
    lowercase: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Report {
    Dist,
    Attrib,
    Corr,
    Buckets,
    Dashboard,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, value_enum)]
    report: Report,
    /// BLEU report from `lqm bleu`; required by `--report corr`.
    #[arg(long)]
    bleu: Option<PathBuf>,
    /// Taxonomy level for `--report dist`.
    #[arg(long, value_parser = parse_level, default_value = "subcategory")]
    level: Level,
    /// Exact permutation p-values (n <= 10).
    #[arg(long)]
    exact_p: bool,
    /// Keep only this direction, e.g. EGY->ENG.
    #[arg(long, value_parser = parse_direction)]
    direction: Option<Direction>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dialect: Option<String>,
    /// Keep only dialect->English segments.
    #[arg(long, conflicts_with = "from_english")]
    into_english: bool,
    /// Keep only English->dialect segments.
    #[arg(long)]
    from_english: bool,
    #[command(flatten)]
    scoring: Scoring,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Server data directory.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    project: String,
    /// Directory receiving segments.jsonl and annotations.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Log entries between snapshot compactions; 0 disables compaction.
    #[arg(long, default_value_t = 1000)]
    compact_every: usize,
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    s.parse()
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse()
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse()
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input data: exit 1.
    Invalid(String),
    /// Inconsistent flags: exit 2.
    Usage(String),
}

impl Failure {
    pub fn invalid(msg: impl Into<String>) -> Failure {
        Failure::Invalid(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Failure {
        Failure::Usage(msg.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Score(a) => commands::score(a),
        Command::Iaa(a) => commands::iaa(a),
        Command::Bleu(a) => commands::bleu(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Export(a) => commands::export(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
    }
}
