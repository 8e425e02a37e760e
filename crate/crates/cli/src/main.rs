//! `ddjscc`: train dynamic-depth JSCC codecs and their fixed-depth
//! baselines, sweep them over SNR and CR grids, and check gradients.
//!
//! Exit status: 0 success, 1 failed self-check, 2 usage or configuration
//! error, 3 training divergence, 4 failed `--assert`.

mod commands;
mod error;
mod manifest;
mod parse;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{gradcheck, sweep, synth, train};

#[derive(Parser, Debug)]
#[command(name = "ddjscc", version, about = "Dynamic-depth deep joint source-channel coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a dynamic model or a fixed-depth baseline.
    Train(train::TrainArgs),
    /// Evaluate checkpoints over an SNR x CR x depth grid and compare them.
    Sweep(sweep::SweepArgs),
    /// Compare every backward rule against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Write the synthetic image corpus as PPM files.
    SynthData(synth::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::SynthData(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
