mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use commands::{Context, ReportKind};
use config::{Format, ProviderChoice, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "trajkg",
    version,
    about = "Course knowledge graphs, question-to-edge mapping and learning-trajectory reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: paths.out, else ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report formats to write
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Extraction provider
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Refine a corpus of course materials into statements
    Ingest {
        /// Corpus directory (default: paths.corpus)
        corpus: Option<PathBuf>,
    },
    /// Extract nodes and relations and save the knowledge graph
    BuildGraph {
        /// Refined list (default: <out>/refined.tsv)
        refined: Option<PathBuf>,
    },
    /// Map question banks onto graph edges
    Map {
        /// Question bank JSON files (default: paths.assessments)
        banks: Vec<PathBuf>,
    },
    /// Validate student responses into the response store
    Record {
        /// Responses CSV (default: paths.responses)
        responses: Option<PathBuf>,
    },
    /// Write an analytics report
    Report {
        #[command(subcommand)]
        kind: ReportCommand,
    },
    /// Write the graph as Graphviz DOT, optionally colored for one student
    ExportDot {
        #[arg(long)]
        student: Option<String>,
        /// Assessment for the overlay (default: the last one)
        #[arg(long, requires = "student")]
        assessment: Option<String>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// ExamCoverage per assessment and pairwise overlap
    Coverage,
    /// Selective-attention warning across assessments
    Bias,
    /// One student against the class, with a DOT overlay
    Student {
        id: String,
        /// Assessment to compare on (default: the last one)
        #[arg(long)]
        assessment: Option<String>,
    },
    /// Class mastery per assessment and cumulative class coverage
    Class,
    /// Coverage by score group
    Groups { k: usize },
    /// Nodes whose non-mastery most raises later error rates
    Bottlenecks,
    /// Share of the course tested by all assessments together
    Comprehensiveness,
}

impl From<ReportCommand> for ReportKind {
    fn from(c: ReportCommand) -> Self {
        match c {
            ReportCommand::Coverage => ReportKind::Coverage,
            ReportCommand::Bias => ReportKind::Bias,
            ReportCommand::Student { id, assessment } => ReportKind::Student { id, assessment },
            ReportCommand::Class => ReportKind::Class,
            ReportCommand::Groups { k } => ReportKind::Groups { k },
            ReportCommand::Bottlenecks => ReportKind::Bottlenecks,
            ReportCommand::Comprehensiveness => ReportKind::Comprehensiveness,
        }
    }
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.paths.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Context {
        format: cli.format.unwrap_or(config.report.format),
        provider: cli.provider.unwrap_or(config.provider.kind),
        out,
        config,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Ingest { corpus } => commands::ingest(&ctx, corpus),
        Command::BuildGraph { refined } => commands::build(&ctx, refined),
        Command::Map { banks } => commands::map(&ctx, banks),
        Command::Record { responses } => commands::record(&ctx, responses),
        Command::Report { kind } => commands::report(&ctx, kind.into()),
        Command::ExportDot {
            student,
            assessment,
        } => commands::export(&ctx, student, assessment),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .without_time()
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
