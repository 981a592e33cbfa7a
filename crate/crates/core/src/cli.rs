//! Implementations behind the `sample`, `sweep`, and `verify` subcommands.
//!
//! Exit codes: 0 success, 2 invalid configuration (the message names the
//! failing key), 3 numerical abort (non-finite particle with step
//! provenance), 4 verification failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::report::RunReport;
use crate::sampler::{run, RunOutput};
use crate::sweep::run_sweep;
use crate::verify::run_verify;

/// Options shared by all subcommands.
#[derive(Clone, Debug)]
pub struct CommandOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Adds wall-clock fields to reports, breaking byte reproducibility.
    pub emit_timing: bool,
}

pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::InvalidConfig { .. }
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::Io { .. } => 2,
        Error::NonFinite { .. } => 3,
        Error::DiagnosticFailed(_) => 4,
    }
}

/// Writes via a temp file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn output_dir(options: &CommandOptions, config: &ConfigFile) -> PathBuf {
    options
        .out
        .clone()
        .or_else(|| config.run.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn ensemble_csv(output: &RunOutput, index: usize, t: f64, particles: &[crate::numerics::StateVec]) -> String {
    let d = output.report.dimension;
    let mut text = String::new();
    let _ = writeln!(text, "# sampler={}", output.report.sampler);
    let _ = writeln!(text, "# seed={}", output.report.seed);
    let _ = writeln!(text, "# dimension={d}");
    let _ = writeln!(text, "# checkpoint_index={index}");
    let _ = writeln!(text, "# reverse_time={t}");
    let _ = writeln!(text, "# horizon={}", output.report.horizon);
    let header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    let _ = writeln!(text, "{}", header.join(","));
    for p in particles {
        let row: Vec<String> = p.as_slice().iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(text, "{}", row.join(","));
    }
    text
}

fn write_run_outputs(
    dir: &Path,
    config: &ConfigFile,
    output: &RunOutput,
    emit_timing: bool,
) -> Result<()> {
    write_atomic(&dir.join("report.txt"), &output.report.to_canonical_text(emit_timing))?;
    write_atomic(&dir.join("config.canonical.toml"), &config.canonical_toml()?)?;
    for (index, (t, particles)) in output.snapshots.iter().enumerate() {
        let name = format!("checkpoint_{index:03}.csv");
        write_atomic(&dir.join(name), &ensemble_csv(output, index, *t, particles))?;
    }
    Ok(())
}

fn sample_inner(options: &CommandOptions) -> Result<()> {
    let config = ConfigFile::load(&options.config)?;
    let dir = output_dir(options, &config);
    let settings = config.to_settings(options.seed)?;
    let plan = settings.resolve()?;
    let output = run(&plan)?;
    write_run_outputs(&dir, &config, &output, options.emit_timing)?;
    println!(
        "{}: {} particles at reverse time {} -> {}",
        output.report.sampler,
        output.ensemble.particles.len(),
        output.ensemble.reverse_time,
        dir.display()
    );
    Ok(())
}

/// Runs the configured sampler and writes the report plus optional
/// checkpoint ensembles.
pub fn cmd_sample(options: &CommandOptions) -> i32 {
    match sample_inner(options) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn sweep_inner(options: &CommandOptions) -> Result<()> {
    let config = ConfigFile::load(&options.config)?;
    let dir = output_dir(options, &config);
    let (parameter, values, metric) = config.sweep_parameter()?;
    let settings = config.to_settings(options.seed)?;
    let record = run_sweep(&settings, parameter, values.as_slice(), metric)?;

    // The report header parameters come from the base configuration.
    let base_plan = settings.clone().resolve()?;
    let mut report = RunReport {
        sampler: format!("sweep:{}", record.parameter_name),
        dimension: base_plan.mixture.dim(),
        ensemble_size: base_plan.ensemble_size,
        seed: base_plan.seed,
        horizon: base_plan.horizon,
        h_pred: base_plan.h_pred,
        h_corr: base_plan.corrector.step,
        delta: base_plan.delta,
        n_rounds: base_plan.n_rounds,
        lipschitz: base_plan.lipschitz,
        second_moment: base_plan.smoothness.second_moment,
        adjustments: base_plan.adjustments.clone(),
        checkpoints: Vec::new(),
        sweep: Some(record),
    };
    let sweep = report.sweep.as_ref().expect("sweep record");
    let slope_text = format!("slope {}\nstderr {}\n", sweep.slope, sweep.slope_stderr);
    let csv = report.sweep_csv().expect("sweep csv");
    write_atomic(&dir.join("report.txt"), &report.to_canonical_text(options.emit_timing))?;
    write_atomic(&dir.join("sweep.csv"), &csv)?;
    write_atomic(&dir.join("slope.txt"), &slope_text)?;
    let sweep = report.sweep.take().expect("sweep record");
    println!(
        "sweep {} over {} values: slope {} +- {} -> {}",
        sweep.parameter_name,
        sweep.points.len(),
        sweep.slope,
        sweep.slope_stderr,
        dir.display()
    );
    Ok(())
}

/// Runs the sampler once per swept value and writes the fitted slope.
pub fn cmd_sweep(options: &CommandOptions) -> i32 {
    match sweep_inner(options) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn verify_inner(options: &CommandOptions) -> Result<Vec<String>> {
    let config = ConfigFile::load(&options.config)?;
    let dir = output_dir(options, &config);
    let mixture = config.mixture()?;
    let spec = config.verify.clone().unwrap_or_default();
    let seed = options.seed.unwrap_or(config.run.seed);
    let results = run_verify(&mixture, &spec, seed)?;

    let mut text = String::new();
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "check {}: {status}", r.name);
        let _ = writeln!(text, "  {}", r.detail);
        if !r.passed {
            failed.push(r.name.clone());
        }
    }
    write_atomic(&dir.join("verify_report.txt"), &text)?;
    print!("{text}");
    Ok(failed)
}

/// Runs the verification suite; exit 0 iff every check passes.
pub fn cmd_verify(options: &CommandOptions) -> i32 {
    match verify_inner(options) {
        Ok(failed) if failed.is_empty() => 0,
        Ok(failed) => {
            eprintln!("error: verification failed: {}", failed.join(", "));
            4
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
