//! `modigen` — command-line workflow for Modelica corpus preprocessing,
//! graph retrieval, LLM generation, validation, repair, and evaluation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::ManifestRecorder;

#[derive(Parser)]
#[command(
    name = "modigen",
    version,
    about = "Modelica generation workflow: preprocess, index, generate, validate, repair, evaluate",
    arg_required_else_help = true
)]
struct Cli {
    /// Log verbosity on stderr.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    /// Write a JSON run manifest (inputs digests, flags, timestamps) here.
    #[arg(long, global = true)]
    manifest_out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build Dataset_all (and optionally Dataset_sft) from a Modelica library tree.
    Preprocess(PreprocessArgs),
    /// Property-graph index operations.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Sample candidates from a chat-completion endpoint.
    Generate(GenerateArgs),
    /// Run candidates through the four-stage validation pipeline.
    Validate(ValidateArgs),
    /// Repair failing candidates through the feedback loop.
    Repair(RepairArgs),
    /// Aggregate validation reports into pass@k metrics.
    Evaluate(EvaluateArgs),
    /// Chain generate -> validate -> repair -> evaluate from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Root directory of the Modelica library.
    #[arg(long)]
    lib_root: PathBuf,
    /// Library name used as the qualified-name prefix.
    #[arg(long)]
    lib_name: String,
    /// Modelica version recorded in every record.
    #[arg(long)]
    modelica_version: String,
    /// Output JSONL of corpus records.
    #[arg(long)]
    out: PathBuf,
    /// Also emit an instruction-supervised dataset here.
    #[arg(long)]
    sft_out: Option<PathBuf>,
    /// Template file for the SFT "instruction" field.
    #[arg(long, requires = "sft_out")]
    instruction_template: Option<PathBuf>,
    /// Template file for the SFT "query" field.
    #[arg(long, requires = "sft_out")]
    query_template: Option<PathBuf>,
    /// Maximum cleaned model size in characters.
    #[arg(long, default_value_t = 20_000)]
    max_model_chars: usize,
    /// Write the rejection log (JSONL of {name, reason}) here.
    #[arg(long)]
    reject_log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build the property graph from a corpus JSONL file.
    Build(GraphBuildArgs),
    /// Query a saved graph and print snippets as JSONL.
    Query(GraphQueryArgs),
}

#[derive(Args)]
struct GraphBuildArgs {
    /// Corpus records (dataset_all.jsonl).
    #[arg(long)]
    corpus: PathBuf,
    /// Output graph file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphQueryArgs {
    /// Saved graph file.
    #[arg(long)]
    index: PathBuf,
    /// Query text.
    #[arg(long)]
    query: String,
    /// Neighborhood expansion depth.
    #[arg(long, default_value_t = modigen_core::graph::DEFAULT_HOPS)]
    hops: usize,
    /// Character budget for packed snippets.
    #[arg(long, default_value_t = modigen_core::graph::DEFAULT_CHAR_BUDGET)]
    budget: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Component,
    Testcase,
}

impl From<TaskArg> for modigen_core::genclient::TaskKind {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Component => modigen_core::genclient::TaskKind::Component,
            TaskArg::Testcase => modigen_core::genclient::TaskKind::TestCase,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Which task family from the bench file to run.
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Bench file (JSONL of tasks).
    #[arg(long)]
    bench: PathBuf,
    /// Samples per task.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Sampling temperature (defaults to the task family's setting).
    #[arg(long)]
    temperature: Option<f64>,
    /// top_k sent to top_k-capable endpoints.
    #[arg(long)]
    top_k: Option<u32>,
    /// Declare the endpoint top_k-capable.
    #[arg(long, default_value_t = false)]
    top_k_capable: bool,
    /// Chat-completions endpoint URL, or file://responses.jsonl to replay.
    #[arg(long)]
    endpoint: String,
    /// Model name sent with each request.
    #[arg(long)]
    model: String,
    /// Maximum tokens per completion.
    #[arg(long, default_value_t = 2048)]
    max_tokens: usize,
    /// Concurrent in-flight requests.
    #[arg(long, default_value_t = 1)]
    max_concurrent_requests: usize,
    /// Property graph index enabling retrieval-augmented prompts.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Retrieval hops.
    #[arg(long, default_value_t = modigen_core::graph::DEFAULT_HOPS)]
    hops: usize,
    /// Retrieval character budget.
    #[arg(long, default_value_t = modigen_core::graph::DEFAULT_CHAR_BUDGET)]
    budget: usize,
    /// Output JSONL of candidates.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Omc,
    Mock,
    Micro,
}

#[derive(Args, Clone)]
struct BackendOpts {
    /// Simulation backend.
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// Path to the external compiler executable (omc backend).
    #[arg(long)]
    omc_path: Option<PathBuf>,
    /// Scripted fixture file (mock backend).
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Candidates to validate (JSONL).
    #[arg(long)]
    candidates: PathBuf,
    /// Bench file the candidates refer to.
    #[arg(long)]
    bench: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    /// Directory of reference trajectory CSVs named <task_id>.csv.
    #[arg(long)]
    refs: Option<PathBuf>,
    /// Worker sessions.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Output JSONL of validation reports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RepairArgs {
    /// Candidates file (JSONL).
    #[arg(long)]
    candidates: PathBuf,
    /// Round-0 validation reports for those candidates.
    #[arg(long)]
    reports: PathBuf,
    /// Bench file.
    #[arg(long)]
    bench: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    /// Directory of reference trajectory CSVs named <task_id>.csv.
    #[arg(long)]
    refs: Option<PathBuf>,
    /// Chat-completions endpoint URL or file:// replay.
    #[arg(long)]
    endpoint: String,
    /// Model name.
    #[arg(long)]
    model: String,
    /// Repair rounds per failing candidate.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// Leave the failed code out of repair prompts.
    #[arg(long, default_value_t = false)]
    exclude_failed_code: bool,
    /// Output JSONL of final candidates.
    #[arg(long)]
    out: PathBuf,
    /// Output JSONL of repair attempts.
    #[arg(long)]
    attempts_out: PathBuf,
    /// Output JSONL of final (merged) reports.
    #[arg(long)]
    reports_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Validation reports (JSONL).
    #[arg(long)]
    reports: PathBuf,
    /// k for the pass@scenario columns.
    #[arg(long)]
    scenario: usize,
    /// Output table file.
    #[arg(long)]
    out: PathBuf,
    /// Include the per-task breakdown.
    #[arg(long, default_value_t = false)]
    per_task: bool,
    /// Table format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration (TOML or JSON by extension).
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();

    let argv: Vec<String> = std::env::args().collect();
    let recorder = ManifestRecorder::new(cli.manifest_out.clone(), &argv);

    let result = dispatch(&cli.command);
    let exit_code = match &result {
        Ok(()) => 0,
        Err(error) => {
            eprintln!("error: {error:#}");
            1
        }
    };
    recorder.finish(exit_code);
    ExitCode::from(exit_code as u8)
}

fn dispatch(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Preprocess(args) => commands::preprocess::run(args),
        Command::Graph(GraphCommand::Build(args)) => commands::graph::build(args),
        Command::Graph(GraphCommand::Query(args)) => commands::graph::query(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::Validate(args) => commands::validate::run(args),
        Command::Repair(args) => commands::repair::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Pipeline(args) => commands::pipeline::run(args),
    }
}
