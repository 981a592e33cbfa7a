use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pfode::cli::{cmd_sample, cmd_sweep, cmd_verify, CommandOptions};

/// Predictor-corrector sampling along the probability flow ODE for Gaussian
/// mixture targets.
#[derive(Parser)]
#[command(name = "pfode", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides run.output_dir; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Include wall-clock timing in reports (breaks byte reproducibility).
    #[arg(long)]
    emit_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sampler and write report plus checkpoint CSVs.
    Sample(Common),
    /// Sweep one parameter and fit the error-scaling slope.
    Sweep(Common),
    /// Run the verification diagnostics; nonzero exit on any failure.
    Verify(Common),
}

fn to_options(common: &Common) -> CommandOptions {
    CommandOptions {
        config: common.config.clone(),
        out: common.out.clone(),
        seed: common.seed,
        emit_timing: common.emit_timing,
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Sample(c) => {
            init_threads(c.threads);
            cmd_sample(&to_options(c))
        }
        Command::Sweep(c) => {
            init_threads(c.threads);
            cmd_sweep(&to_options(c))
        }
        Command::Verify(c) => {
            init_threads(c.threads);
            cmd_verify(&to_options(c))
        }
    };
    ExitCode::from(code as u8)
}
