mod artifact;
mod commands;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{analyze_bias, evaluate, prepare, revise, synth, train};

/// Controllable agency rewriting: data preparation, model training,
/// revision, evaluation and screenplay bias analysis.
#[derive(Debug, Parser)]
#[command(name = "agency", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Prepare(prepare::Args),
    Train(train::Args),
    /// Train the fluency language model used by `evaluate`.
    TrainLm(train::LmArgs),
    Revise(revise::Args),
    Evaluate(evaluate::Args),
    AnalyzeBias(analyze_bias::Args),
    Synth(synth::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare(a) => prepare::run(a),
        Command::Train(a) => train::run(a),
        Command::TrainLm(a) => train::run_lm(a),
        Command::Revise(a) => revise::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::AnalyzeBias(a) => analyze_bias::run(a),
        Command::Synth(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
