use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plauskit::harness::{load_config, run, Command};

#[derive(Parser)]
#[command(name = "plauskit", version, about = "Minimal-pair plausibility evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that inputs exist and parse.
    Validate(RunArgs),
    /// Write baseline sentence scores.
    Score(RunArgs),
    /// Accuracy, distributions, correlations and error profile.
    Evaluate(RunArgs),
    /// Mixed-effects regression per dataset and scorer.
    Regress(RunArgs),
    /// Linear probes over hidden-state embeddings.
    Probe(RunArgs),
    /// Every analysis plus plot-data tables.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set probing.folds=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Validate(a) => (Command::Validate, a),
        Cmd::Score(a) => (Command::Score, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Regress(a) => (Command::Regress, a),
        Cmd::Probe(a) => (Command::Probe, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let result = load_config(&args.config, &args.set, args.seed, args.out.as_deref()).and_then(|c| run(command, c));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
