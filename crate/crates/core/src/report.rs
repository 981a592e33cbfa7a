//! Run reports and their canonical text serialization.
//!
//! The canonical format is a nested key-value document with one fixed field
//! order, so identical runs serialize to identical bytes. Wall-clock timing
//! is kept out of the canonical form unless explicitly requested.

use std::fmt::Write as _;

/// Metrics recorded at one checkpoint.
#[derive(Clone, Debug, Default)]
pub struct CheckpointRecord {
    pub reverse_time: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mode_weights: Vec<f64>,
    pub w2_to_exact: Option<f64>,
    pub w2_stderr: Option<f64>,
    /// Joint TV estimate, only populated for `d <= 3`.
    pub tv_to_exact: Option<f64>,
    pub runtime_seconds: Option<f64>,
}

/// One point of a parameter sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    pub parameter: f64,
    pub error: f64,
    pub stderr: f64,
}

/// A completed sweep with its fitted log-log slope.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub parameter_name: String,
    pub metric: String,
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    pub slope_stderr: f64,
}

/// Full record of a sampler run.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub sampler: String,
    pub dimension: usize,
    pub ensemble_size: usize,
    pub seed: u64,
    pub horizon: f64,
    pub h_pred: f64,
    pub h_corr: f64,
    pub delta: f64,
    pub n_rounds: usize,
    pub lipschitz: f64,
    pub second_moment: f64,
    pub adjustments: Vec<String>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub sweep: Option<SweepRecord>,
}

fn write_float(out: &mut String, value: f64) {
    // Shortest round-trip representation; deterministic for a given value.
    let _ = write!(out, "{value}");
}

fn write_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_float(out, *v);
    }
    out.push(']');
}

fn line_scalar(out: &mut String, indent: usize, key: &str, value: f64) {
    let _ = write!(out, "{}{key}: ", "  ".repeat(indent));
    write_float(out, value);
    out.push('\n');
}

fn line_vec(out: &mut String, indent: usize, key: &str, values: &[f64]) {
    let _ = write!(out, "{}{key}: ", "  ".repeat(indent));
    write_floats(out, values);
    out.push('\n');
}

impl RunReport {
    /// Canonical nested key-value text. `include_timing` adds wall-clock
    /// fields and therefore breaks byte-for-byte reproducibility.
    pub fn to_canonical_text(&self, include_timing: bool) -> String {
        let mut out = String::new();
        out.push_str("run:\n");
        let _ = writeln!(out, "  sampler: {}", self.sampler);
        let _ = writeln!(out, "  dimension: {}", self.dimension);
        let _ = writeln!(out, "  ensemble_size: {}", self.ensemble_size);
        let _ = writeln!(out, "  seed: {}", self.seed);
        line_scalar(&mut out, 1, "horizon", self.horizon);
        line_scalar(&mut out, 1, "h_pred", self.h_pred);
        line_scalar(&mut out, 1, "h_corr", self.h_corr);
        line_scalar(&mut out, 1, "delta", self.delta);
        let _ = writeln!(out, "  n_rounds: {}", self.n_rounds);
        line_scalar(&mut out, 1, "lipschitz", self.lipschitz);
        line_scalar(&mut out, 1, "second_moment", self.second_moment);
        if !self.adjustments.is_empty() {
            out.push_str("  adjustments:\n");
            for a in &self.adjustments {
                let _ = writeln!(out, "    - {a}");
            }
        }
        for (i, c) in self.checkpoints.iter().enumerate() {
            let _ = writeln!(out, "checkpoint {i}:");
            line_scalar(&mut out, 1, "reverse_time", c.reverse_time);
            line_vec(&mut out, 1, "mean", &c.mean);
            line_vec(&mut out, 1, "variance", &c.variance);
            line_vec(&mut out, 1, "mode_weights", &c.mode_weights);
            if let Some(w2) = c.w2_to_exact {
                line_scalar(&mut out, 1, "w2_to_exact", w2);
            }
            if let Some(se) = c.w2_stderr {
                line_scalar(&mut out, 1, "w2_stderr", se);
            }
            if let Some(tv) = c.tv_to_exact {
                line_scalar(&mut out, 1, "tv_to_exact", tv);
            }
            if include_timing {
                if let Some(rt) = c.runtime_seconds {
                    line_scalar(&mut out, 1, "runtime_seconds", rt);
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            out.push_str("sweep:\n");
            let _ = writeln!(out, "  parameter: {}", sweep.parameter_name);
            let _ = writeln!(out, "  metric: {}", sweep.metric);
            for p in &sweep.points {
                let _ = write!(out, "  - value: ");
                write_float(&mut out, p.parameter);
                let _ = write!(&mut out, ", error: ");
                write_float(&mut out, p.error);
                let _ = write!(&mut out, ", stderr: ");
                write_float(&mut out, p.stderr);
                out.push('\n');
            }
            line_scalar(&mut out, 1, "slope", sweep.slope);
            line_scalar(&mut out, 1, "slope_stderr", sweep.slope_stderr);
        }
        out
    }

    /// Sweep table as CSV: `parameter,error,stderr`.
    pub fn sweep_csv(&self) -> Option<String> {
        let sweep = self.sweep.as_ref()?;
        let mut out = String::from("parameter,error,stderr\n");
        for p in &sweep.points {
            let _ = writeln!(out, "{},{},{}", p.parameter, p.error, p.stderr);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_is_stable_and_timing_gated() {
        let report = RunReport {
            sampler: "dpum".into(),
            dimension: 2,
            ensemble_size: 10,
            seed: 7,
            horizon: 2.0,
            h_pred: 0.05,
            h_corr: 0.005,
            delta: 0.003125,
            n_rounds: 2,
            lipschitz: 1.0,
            second_moment: 1.5,
            adjustments: vec!["h_pred adjusted".into()],
            checkpoints: vec![CheckpointRecord {
                reverse_time: 1.0,
                mean: vec![0.1, -0.2],
                variance: vec![1.0, 0.9],
                mode_weights: vec![1.0],
                w2_to_exact: Some(0.05),
                w2_stderr: Some(0.01),
                tv_to_exact: Some(0.02),
                runtime_seconds: Some(1.23),
            }],
            sweep: None,
        };
        let a = report.to_canonical_text(false);
        let b = report.to_canonical_text(false);
        assert_eq!(a, b);
        assert!(!a.contains("runtime_seconds"));
        assert!(report.to_canonical_text(true).contains("runtime_seconds"));
    }

    #[test]
    fn sweep_csv_layout() {
        let report = RunReport {
            sweep: Some(SweepRecord {
                parameter_name: "h_pred".into(),
                metric: "w2_vs_refined".into(),
                points: vec![SweepPoint {
                    parameter: 0.01,
                    error: 0.1,
                    stderr: 0.001,
                }],
                slope: 1.0,
                slope_stderr: 0.05,
            }),
            ..Default::default()
        };
        let csv = report.sweep_csv().unwrap();
        assert!(csv.starts_with("parameter,error,stderr\n"));
        assert!(csv.contains("0.01,0.1,0.001"));
    }
}
