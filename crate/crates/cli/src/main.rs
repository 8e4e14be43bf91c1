//! Command-line front end for scoring, evaluating, and validating
//! structured forensic-report corpora.
//!
//! Exit codes: 0 on success, 1 when `validate` found structural errors,
//! 2 for input/schema/configuration problems, 3 when the embedding
//! backend is unavailable.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::{AdvantagesArgs, EvaluateArgs, ScoreArgs, ValidateArgs};

#[derive(Parser)]
#[command(
    name = "forgeval",
    version,
    about = "Score, evaluate, and validate structured document-forensics reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score each prediction against its reference and write a reward log.
    Score(ScoreArgs),
    /// Compute corpus benchmark metrics and print the summary table.
    Evaluate(EvaluateArgs),
    /// Check reasoning traces for structural problems.
    Validate(ValidateArgs),
    /// Normalize rewards into group-relative advantages.
    Advantages(AdvantagesArgs),
}

/// Maps an error chain to the documented exit code.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<forgeval::Error>() {
            return match core {
                forgeval::Error::EmbeddingUnavailable { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Score(args) => commands::score(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Validate(args) => commands::validate(&args),
        Command::Advantages(args) => commands::advantages(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
