//! `visjudge`: synthesize rubric feedback data, run rubric-conditioned
//! judges, and meta-evaluate them.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "visjudge",
    version,
    about = "Rubric-conditioned vision-language judging toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to a fresh timestamped directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Render prompts to disk without calling any backend.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Continue the run in --run-dir from its checkpoint.
    #[arg(long, global = true)]
    pub resume: bool,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate rubrics, instructions, responses and feedback from images.
    Synth(commands::synth::SynthArgs),
    /// Score responses with a judge backend.
    Judge(commands::judge::JudgeArgs),
    /// Correlate two sets of scores.
    Corr(commands::corr::CorrArgs),
    /// Dataset and run analyses.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Pairwise preference win-rate.
    Winrate(commands::winrate::WinrateArgs),
    /// Convert an annotation export into score and choice records.
    Ingest(commands::ingest::IngestArgs),
    /// Check dataset files against their record invariants.
    Validate(commands::validate::ValidateArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Synth(a) => commands::synth::run(g, a),
        Command::Judge(a) => commands::judge::run(g, a),
        Command::Corr(a) => commands::corr::run(g, a),
        Command::Analyze(a) => commands::analyze::run(g, a),
        Command::Winrate(a) => commands::winrate::run(g, a),
        Command::Ingest(a) => commands::ingest::run(g, a),
        Command::Validate(a) => commands::validate::run(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
