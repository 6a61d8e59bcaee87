mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use commands::{DatasetArgs, EvalArgs, LossArgs, ReconstructArgs, SpeckleArgs, TomoArgs};

/// Interferometric particle imaging toolkit.
///
/// Any subcommand accepts `--config FILE` with one `key=value` per line
/// (keys are long flag names); flags given on the command line win.
#[derive(Parser)]
#[command(name = "ipi", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic (speckle, mask) dataset.
    Dataset(DatasetArgs),
    /// Reconstruct shapes from speckle images with error reduction.
    ReconstructEr(ReconstructArgs),
    /// Recombine three orthogonal masks into a voxel grid.
    Tomo(TomoArgs),
    /// Score prediction masks against a dataset.
    Eval(EvalArgs),
    /// Synthesize a single speckle image for inspection.
    Speckle(SpeckleArgs),
    /// Smooth a per-epoch training loss log and plot it.
    Loss(LossArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let argv = match config::expand_config(std::env::args_os().collect(), &Cli::command()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Help and version are not failures.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Dataset(a) => commands::dataset(a),
        Command::ReconstructEr(a) => commands::reconstruct_er(a),
        Command::Tomo(a) => commands::tomo(a),
        Command::Eval(a) => commands::eval(a),
        Command::Speckle(a) => commands::speckle(a),
        Command::Loss(a) => commands::loss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
