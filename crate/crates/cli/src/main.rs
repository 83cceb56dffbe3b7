//! `distill` — synthesize, analyze, and probe instruction corpora against
//! a chat-completion teacher endpoint.
//!
//! Exit codes: 0 success, 1 failure or partial failure (some items
//! errored; a summary is printed), 2 usage errors and missing inputs.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "distill",
    version,
    about = "Instruction corpus distillation pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Teacher base URL, or a `mock:?...` spec for the built-in mock.
    #[arg(long, global = true)]
    endpoint: Option<String>,

    /// Teacher model name.
    #[arg(long, global = true)]
    model: Option<String>,

    /// RNG seed for all sampling in the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Maximum in-flight teacher requests.
    #[arg(long, global = true)]
    concurrency: Option<usize>,

    /// Directory for request/response audit logs (credential redacted).
    #[arg(long, global = true)]
    audit_dir: Option<PathBuf>,

    /// Sampling temperature (omitted: endpoint default).
    #[arg(long, global = true)]
    temperature: Option<f64>,

    /// Nucleus sampling top-p (omitted: endpoint default).
    #[arg(long, global = true)]
    top_p: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a Wikipedia category dump and write the common-topic pool.
    HarvestTopics {
        /// TSV dump: title<TAB>subcategories<TAB>pages.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file, one kept topic title per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run prompt/parse rounds against the teacher, appending new unique
    /// instruction records.
    GenInstructions {
        /// Seed task pool (corpus JSONL schema).
        #[arg(long)]
        seeds: PathBuf,
        /// Seed family: self-instruct, p3, or flan.
        #[arg(long)]
        family: String,
        /// Number of prompt/parse rounds.
        #[arg(long)]
        rounds: usize,
        /// Topic pool file (one title per line); presence switches to
        /// topic-guided generation.
        #[arg(long)]
        topics: Option<PathBuf>,
        /// Corpus file to append to (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Pin record timestamps (ISO-8601) for reproducible output.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Fill in missing responses, resumably.
    GenResponses {
        #[arg(long = "in")]
        input: PathBuf,
        /// Rewritten corpus destination (default: in place).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-subset corpus statistics as CSV.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lexical diversity report (MATTR/TTR), optionally with embedding
    /// cosine statistics and a PCA projection.
    Diversity {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// MATTR window size.
        #[arg(long, default_value_t = 50)]
        window: usize,
        /// Also write the report as a Markdown table.
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Write a 2-D PCA projection of embedded instructions to this CSV.
        #[arg(long)]
        pca_out: Option<PathBuf>,
        /// Print pairwise cosine statistics of embedded instructions.
        #[arg(long, default_value_t = false)]
        cosine: bool,
        /// How many instructions to embed for the semantic measures.
        #[arg(long, default_value_t = 1000)]
        embed_sample: usize,
    },
    /// Ask the teacher the 40 hallucination-inducing questions.
    ProbeHallucination {
        /// Results JSONL (appended; reruns fill missing items).
        #[arg(long)]
        out: PathBuf,
        /// Override question set CSV (id,category,question).
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Opt-in refusal-phrase heuristic labeler: file with one phrase
        /// per line.
        #[arg(long)]
        heuristic: Option<PathBuf>,
        /// Human labels CSV (id,label) to apply and score.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Complete selected RealToxicityPrompts and moderate the completions.
    ProbeToxicity {
        /// JSONL prompt file with per-prompt toxicity scores.
        #[arg(long)]
        prompts: PathBuf,
        /// Prompts per bucket.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Results JSONL (appended; reruns fill missing items).
        #[arg(long)]
        out: PathBuf,
        /// Per-bucket summary CSV destination.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Ingest human ratings and summarize per-model grade counts.
    Ratings {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate emitted artifacts into one Markdown report.
    Report {
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        diversity: Option<PathBuf>,
        #[arg(long)]
        hallucination: Option<PathBuf>,
        #[arg(long)]
        toxicity: Option<PathBuf>,
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures that decide the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or missing inputs: exit 2.
    Usage(String),
    /// Runtime or partial failure: exit 1.
    Failure(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(format!("{e:#}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let resolved = match config::RunConfig::resolve(&cli.global) {
        Ok(resolved) => resolved,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::HarvestTopics { input, out } => {
            commands::harvest::harvest_topics(&resolved, &input, &out)
        }
        Command::GenInstructions {
            seeds,
            family,
            rounds,
            topics,
            out,
            timestamp,
        } => commands::generate::gen_instructions(
            &resolved,
            &seeds,
            &family,
            rounds,
            topics.as_deref(),
            &out,
            timestamp,
        ),
        Command::GenResponses { input, out } => {
            commands::generate::gen_responses(&resolved, &input, out.as_deref())
        }
        Command::Stats { input, out } => {
            commands::analyze::stats(&resolved, &input, out.as_deref())
        }
        Command::Diversity {
            input,
            out,
            window,
            markdown,
            pca_out,
            cosine,
            embed_sample,
        } => commands::analyze::diversity(
            &resolved,
            &input,
            out.as_deref(),
            window,
            markdown.as_deref(),
            pca_out.as_deref(),
            cosine,
            embed_sample,
        ),
        Command::ProbeHallucination {
            out,
            questions,
            heuristic,
            labels,
        } => commands::probe::hallucination(
            &resolved,
            &out,
            questions.as_deref(),
            heuristic.as_deref(),
            labels.as_deref(),
        ),
        Command::ProbeToxicity {
            prompts,
            n,
            out,
            report,
        } => commands::probe::toxicity(&resolved, &prompts, n, &out, report.as_deref()),
        Command::Ratings { input, out } => {
            commands::probe::ratings(&resolved, &input, out.as_deref())
        }
        Command::Report {
            stats,
            diversity,
            hallucination,
            toxicity,
            ratings,
            out,
        } => commands::report::report(
            &resolved,
            stats.as_deref(),
            diversity.as_deref(),
            hallucination.as_deref(),
            toxicity.as_deref(),
            ratings.as_deref(),
            &out,
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
