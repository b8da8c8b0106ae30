//! `space`: train with SAR-SFT, decode with auto-correct parallel decoding,
//! check losslessness against exact enumeration, and benchmark.
//!
//! Exit codes: 0 on success or PASS, 1 on usage or I/O errors, 2 when a check fails.

mod args;
mod bench;
mod config;
mod data;
mod generate;
mod oracle;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::args::{
    BenchArgs, GenerateArgs, InitArgs, LayoutArgs, OracleArgs, PrepArgs, PreviewArgs, SweepArgs,
    TrainArgs,
};

#[derive(Parser, Debug)]
#[command(name = "space", version, about = "Auto-correct parallel decoding on a toy causal transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fine-tune a model with SAR-SFT on a corpus.
    Train(TrainArgs),
    /// Write a randomly initialised checkpoint.
    InitModel(InitArgs),
    /// Generate from a checkpoint with the AR baseline or auto-correct decoding.
    Generate(GenerateArgs),
    /// Compare decoded sequence distributions against exact AR enumeration.
    OracleCheck(OracleArgs),
    /// Benchmark auto-correct decoding against the AR baseline.
    Bench(BenchArgs),
    /// Train one model per k and benchmark each.
    Sweep(SweepArgs),
    /// Write a synthetic corpus.
    PrepData(PrepArgs),
    /// Show how the masking data path transforms corpus samples.
    MaskPreview(PreviewArgs),
    /// Print the extended decoding layout and its attention mask.
    Layout(LayoutArgs),
}

/// Result of a subcommand that ran to completion.
pub enum Outcome {
    Success,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::InitModel(a) => train::init(a),
        Command::Generate(a) => generate::run(a),
        Command::OracleCheck(a) => oracle::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Sweep(a) => bench::sweep(a),
        Command::PrepData(a) => data::prep(a),
        Command::MaskPreview(a) => data::preview(a),
        Command::Layout(a) => data::layout(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
