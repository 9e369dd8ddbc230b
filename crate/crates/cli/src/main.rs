//! `panet`: face sketch synthesis from photos.
//!
//! Subcommands cover the full workflow: synthesize a toy dataset, train,
//! run inference, score predictions, verify gradients, and inspect where
//! the decoder samples. Exit codes are fixed for scripting:
//!
//!   0 success
//!   1 a check failed (gradcheck disagreement)
//!   2 usage error (bad flags, bad config values, out-of-range arguments)
//!   3 I/O or data error
//!   4 training diverged (the last good checkpoint has been written)
//!   5 checkpoint rejected (corrupt, or from a different configuration)

mod commands;
mod config;
mod render;
mod suite;

use clap::{Parser, Subcommand};
use panet_core::error::Error;

#[derive(Parser)]
#[command(
    name = "panet",
    version,
    about = "Face sketch synthesis: data, training, inference, evaluation, inspection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a deterministic synthetic photo/sketch dataset
    SynthData(commands::synth::SynthArgs),
    /// Train a model on a dataset manifest
    Train(commands::train::TrainArgs),
    /// Synthesize sketches from photos with a trained checkpoint
    Infer(commands::infer::InferArgs),
    /// Score predicted sketches against ground truth
    Eval(commands::eval::EvalArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(commands::gradcheck::GradArgs),
    /// Render sampling locations and feature heatmaps for one pixel
    Inspect(commands::inspect::InspectArgs),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParam(_)
        | Error::ConfigError(_)
        | Error::ShapeMismatch(_)
        | Error::InvalidShape(_) => 2,
        Error::DataError { .. } | Error::Io(_) => 3,
        Error::Divergence { .. } => 4,
        Error::CheckpointError(_) => 5,
        Error::GradCheckFailure(_) | Error::OptimizerError(_) => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::SynthData(a) => commands::synth::run(a),
        Cmd::Train(a) => commands::train::run(a),
        Cmd::Infer(a) => commands::infer::run(a),
        Cmd::Eval(a) => commands::eval::run(a),
        Cmd::Gradcheck(a) => commands::gradcheck::run(a),
        Cmd::Inspect(a) => commands::inspect::run(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
