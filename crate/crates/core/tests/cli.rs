//! End-to-end tests of the `pfode` binary: exit codes, file layout, and
//! byte-level determinism.

use std::path::Path;
use std::process::Command;

fn pfode() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pfode"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_RUN: &str = r#"
[[mixture.components]]
weight = 0.5
mean = [-1.5, 0.0]
variance = 0.5

[[mixture.components]]
weight = 0.5
mean = [1.5, 0.5]
variance = 0.5

[predictor]
horizon = 1.5
h_pred = 0.05

[corrector]
kind = "underdamped"
h_corr = 0.01
budget = "explicit"
n_steps = 5
friction = 1.0

[run]
ensemble_size = 200
seed = 11
checkpoints = [0.0, 1.0]
emit_ensembles = true

[metrics]
w2_reference = 200
slices = 16
tv_bins = 32

[smoothness]
times = 6
probes = 200
"#;

#[test]
fn sample_writes_report_config_echo_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.toml", SMALL_RUN);
    let out = tmp.path().join("out");
    let status = pfode()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.txt").exists());
    assert!(out.join("config.canonical.toml").exists());
    // Checkpoints at t = 0, t = 1, and the final record.
    assert!(out.join("checkpoint_000.csv").exists());
    assert!(out.join("checkpoint_001.csv").exists());
    assert!(out.join("checkpoint_002.csv").exists());
    let csv = std::fs::read_to_string(out.join("checkpoint_000.csv")).unwrap();
    assert!(csv.starts_with("# sampler=dpum"));
    assert!(csv.contains("# reverse_time=0"));
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 201); // header + one row per particle
}

#[test]
fn invalid_config_exits_2_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL_RUN.replace("h_pred = 0.05", "h_pred = -0.05");
    let config = write_config(tmp.path(), "bad.toml", &bad);
    let output = pfode()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("predictor.h_pred"), "stderr: {stderr}");
}

#[test]
fn unreadable_config_exits_2() {
    let output = pfode()
        .args(["sample", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.toml", SMALL_RUN);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let status = pfode()
            .args(["sample", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in [
        "report.txt",
        "config.canonical.toml",
        "checkpoint_000.csv",
        "checkpoint_001.csv",
        "checkpoint_002.csv",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.toml", SMALL_RUN);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    pfode()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_a)
        .status()
        .unwrap();
    pfode()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_b)
        .args(["--seed", "999"])
        .status()
        .unwrap();
    let a = std::fs::read(out_a.join("checkpoint_000.csv")).unwrap();
    let b = std::fs::read(out_b.join("checkpoint_000.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn sweep_needs_at_least_four_values() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL_RUN}\n[sweep]\nparameter = \"h_pred\"\nvalues = [0.05, 0.025]\n"
    );
    let config = write_config(tmp.path(), "sweep.toml", &text);
    let output = pfode()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_and_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL_RUN}\n[sweep]\nparameter = \"h_pred\"\nvalues = [0.1, 0.05, 0.025, 0.0125]\nrefine = 4\n"
    );
    let config = write_config(tmp.path(), "sweep.toml", &text);
    let out = tmp.path().join("out");
    let status = pfode()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("parameter,error,stderr\n"));
    assert_eq!(csv.lines().count(), 5);
    let slope = std::fs::read_to_string(out.join("slope.txt")).unwrap();
    assert!(slope.starts_with("slope "), "{slope}");
}

const VERIFY_FAST: &str = r#"
[verify]
reparam_inner_step = 2e-4
reparam_t_max = 0.5
reparam_particles = 16
perturbation_times = [0.1, 0.5, 1.0]
perturbation_particles = 64
forward_samples = 16384
forward_slices = 48
"#;

/// Off-center mixture: the forward W2 decay is then mean-dominated, which
/// is the regime the convergence check asserts.
fn verify_run_config() -> String {
    SMALL_RUN
        .replace("mean = [-1.5, 0.0]", "mean = [-1.0, 2.0]")
        .replace("mean = [1.5, 0.5]", "mean = [4.0, 3.0]")
}

#[test]
fn verify_passes_on_off_center_mixture() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\n{VERIFY_FAST}", verify_run_config());
    let config = write_config(tmp.path(), "verify.toml", &text);
    let out = tmp.path().join("out");
    let output = pfode()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(output.status.code(), Some(0), "stdout: {stdout}");
    let report = std::fs::read_to_string(out.join("verify_report.txt")).unwrap();
    assert!(report.contains("check underdamped_kernel_moments: PASS"));
    assert!(report.contains("check forward_convergence: PASS"));
}

#[test]
fn corrupted_score_fails_verification_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n{}",
        verify_run_config(),
        VERIFY_FAST.replace("[verify]", "[verify]\ncorrupt_score = true")
    );
    let config = write_config(tmp.path(), "verify.toml", &text);
    let out = tmp.path().join("out");
    let output = pfode()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let report = std::fs::read_to_string(out.join("verify_report.txt")).unwrap();
    assert!(report.contains("check gaussian_stationarity: FAIL"));
    assert!(report.contains("check reparam_identity: FAIL"));
}

#[test]
fn appendix_preset_produces_four_checkpoint_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let preset = Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("presets/appendix-replication.toml");
    let out = tmp.path().join("out");
    let status = pfode()
        .args(["sample", "--config"])
        .arg(&preset)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for i in 0..4 {
        assert!(out.join(format!("checkpoint_{i:03}.csv")).exists());
    }
    assert!(!out.join("checkpoint_004.csv").exists());
}
