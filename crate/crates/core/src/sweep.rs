//! Parameter sweeps that measure error-scaling exponents.
//!
//! A sweep repeats the sampler run while varying exactly one knob, computes
//! one scalar error per value, and fits a log-log slope. Runs share the base
//! seed, so every stream (initialization, corrector noise, velocity draws)
//! is common across the sweep; h-predictor and score-error sweeps measure
//! distance to a common-random-number reference run, which removes the
//! Monte Carlo floor that would otherwise mask the exponent.

use crate::error::{Error, Result};
use crate::metrics::{slope_regression, w2_exact, w2_sliced, EXACT_W2_CAP};
use crate::numerics::StateVec;
use crate::oracle::Perturbation;
use crate::report::{SweepPoint, SweepRecord};
use crate::sampler::{run, run_instrumented, RunOutput, RunSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    HPred,
    HCorr,
    EpsilonSc,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::HPred => "h_pred",
            SweepParameter::HCorr => "h_corr",
            SweepParameter::EpsilonSc => "epsilon_sc",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "h_pred" => Ok(SweepParameter::HPred),
            "h_corr" => Ok(SweepParameter::HCorr),
            "epsilon_sc" => Ok(SweepParameter::EpsilonSc),
            other => Err(Error::invalid_config(
                "sweep.parameter",
                format!("unknown parameter `{other}` (h_pred, h_corr, epsilon_sc)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMetric {
    /// W2 between each run's output and a reference run with the parameter
    /// refined by `refine` (h_pred) or set to zero (epsilon_sc).
    W2VsReference { refine: u32 },
    /// W2 between each run's output and exact samples of the early-stopped
    /// marginal.
    W2VsExact { reference_size: usize },
    /// Square root of half the accumulated corrector path divergence
    /// (the Girsanov KL between the discretized and ideal corrector paths).
    CorrectorDivergence,
}

impl SweepMetric {
    pub fn name(self) -> &'static str {
        match self {
            SweepMetric::W2VsReference { .. } => "w2_vs_reference",
            SweepMetric::W2VsExact { .. } => "w2_vs_exact",
            SweepMetric::CorrectorDivergence => "corrector_divergence",
        }
    }
}

fn apply(settings: &RunSettings, parameter: SweepParameter, value: f64) -> Result<RunSettings> {
    let mut s = settings.clone();
    match parameter {
        SweepParameter::HPred => s.h_pred = value,
        SweepParameter::HCorr => s.h_corr = value,
        SweepParameter::EpsilonSc => match &settings.perturbation {
            Perturbation::ConstantBias { direction, .. } => {
                s.perturbation = Perturbation::ConstantBias {
                    epsilon: value,
                    direction: direction.clone(),
                };
            }
            _ => {
                return Err(Error::invalid_config(
                    "sweep.parameter",
                    "epsilon_sc sweeps need a constant_bias perturbation to fix the direction",
                ))
            }
        },
    }
    Ok(s)
}

fn ensemble_distance(a: &[StateVec], b: &[StateVec], slices: usize, seed: u64) -> Result<(f64, f64)> {
    if a.len() <= EXACT_W2_CAP && a.len() == b.len() {
        Ok((w2_exact(a, b)?, 0.0))
    } else {
        let est = w2_sliced(a, b, slices, seed)?;
        Ok((est.estimate, est.stderr))
    }
}

fn exact_reference(out: &RunOutput, settings: &RunSettings, n: usize) -> Result<Vec<StateVec>> {
    use crate::numerics::{Phase, RngStream, StreamId};
    // reverse_time = T - delta, so the forward time of the marginal is delta.
    let forward = (out.report.horizon - out.ensemble.reverse_time).max(0.0);
    let marginal = settings.mixture.ou_marginal(forward)?;
    Ok((0..n)
        .map(|k| {
            let mut rng = RngStream::new(
                settings.seed ^ 0x0ddb_a11,
                StreamId::new(k as u64, Phase::MixtureGauss, 999),
            );
            marginal.sample(&mut rng)
        })
        .collect())
}

/// Runs the sweep and fits the slope. Requires at least four values; spans
/// of less than a factor eight are accepted but reduce the fit's leverage.
pub fn run_sweep(
    base: &RunSettings,
    parameter: SweepParameter,
    values: &[f64],
    metric: SweepMetric,
) -> Result<SweepRecord> {
    if values.len() < 4 {
        return Err(Error::invalid_config(
            "sweep.values",
            format!("need at least 4 sweep values, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid_config(
            "sweep.values",
            "sweep values must be positive",
        ));
    }
    if parameter == SweepParameter::HCorr && base.predictor_only {
        return Err(Error::invalid_config(
            "sweep.parameter",
            "h_corr sweep is meaningless in predictor-only mode",
        ));
    }

    // Sweep runs skip checkpoint metrics; the sweep computes its own error.
    let mut base = base.clone();
    base.metrics.w2_reference = 0;
    base.metrics.tv_bins = 0;
    base.keep_snapshots = false;

    let reference: Option<RunOutput> = match metric {
        SweepMetric::W2VsReference { refine } => {
            if refine < 2 && parameter != SweepParameter::EpsilonSc {
                return Err(Error::invalid_config(
                    "sweep.refine",
                    "reference refinement factor must be at least 2",
                ));
            }
            let ref_settings = match parameter {
                SweepParameter::HPred | SweepParameter::HCorr => {
                    let smallest = values.iter().cloned().fold(f64::INFINITY, f64::min);
                    apply(&base, parameter, smallest / refine as f64)?
                }
                SweepParameter::EpsilonSc => apply(&base, parameter, 0.0).map(|mut s| {
                    // epsilon = 0 keeps the direction but zeroes the bias.
                    if let Perturbation::ConstantBias { epsilon, .. } = &mut s.perturbation {
                        *epsilon = 0.0;
                    }
                    s
                })?,
            };
            Some(run(&ref_settings.resolve()?)?)
        }
        _ => None,
    };

    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let settings = apply(&base, parameter, value)?;
        let plan = settings.clone().resolve()?;
        // Regress against the adjusted knob actually used by the run.
        let x = match parameter {
            SweepParameter::HPred => plan.h_pred,
            SweepParameter::HCorr => plan.corrector.step,
            SweepParameter::EpsilonSc => value,
        };
        let (error, stderr) = match metric {
            SweepMetric::W2VsReference { .. } => {
                let out = run(&plan)?;
                let reference = reference.as_ref().expect("reference run exists");
                ensemble_distance(
                    &out.ensemble.particles,
                    &reference.ensemble.particles,
                    base.metrics.slices.max(32),
                    base.seed,
                )?
            }
            SweepMetric::W2VsExact { reference_size } => {
                let out = run(&plan)?;
                let exact = exact_reference(&out, &settings, reference_size)?;
                ensemble_distance(
                    &out.ensemble.particles,
                    &exact,
                    base.metrics.slices.max(32),
                    base.seed,
                )?
            }
            SweepMetric::CorrectorDivergence => {
                let out = run_instrumented(&plan)?;
                let summary = out.girsanov_kl.ok_or_else(|| {
                    Error::InvalidArgument("instrumented run produced no divergence".into())
                })?;
                let error = (summary.mean_kl / 2.0).sqrt();
                let stderr = if error > 0.0 {
                    summary.stderr_kl / (4.0 * error)
                } else {
                    0.0
                };
                (error, stderr)
            }
        };
        points.push(SweepPoint {
            parameter: x,
            error,
            stderr,
        });
    }

    let fit_points: Vec<(f64, f64)> = points.iter().map(|p| (p.parameter, p.error)).collect();
    let (slope, slope_stderr) = slope_regression(&fit_points)?;
    Ok(SweepRecord {
        parameter_name: parameter.name().into(),
        metric: metric.name().into(),
        points,
        slope,
        slope_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{Component, GaussianMixture};
    use crate::corrector::CorrectorKind;
    use crate::sampler::CorrectorBudget;

    fn two_mode_2d() -> GaussianMixture {
        GaussianMixture::new(vec![
            Component::isotropic(0.6, vec![-1.5, 0.5], 0.5),
            Component::isotropic(0.4, vec![1.5, -0.5], 0.5),
        ])
        .unwrap()
    }

    fn sweep_base() -> RunSettings {
        let mut s = RunSettings::new(two_mode_2d(), CorrectorKind::Overdamped);
        s.horizon = 1.5;
        s.h_pred = 0.05;
        s.h_corr = 0.01;
        s.budget = CorrectorBudget::Explicit { n_steps: 10 };
        s.ensemble_size = 512;
        s.seed = 31;
        s
    }

    #[test]
    fn rejects_short_or_invalid_value_lists() {
        let base = sweep_base();
        let err = run_sweep(
            &base,
            SweepParameter::HPred,
            &[0.02],
            SweepMetric::W2VsReference { refine: 8 },
        );
        assert!(err.is_err());
        let err = run_sweep(
            &base,
            SweepParameter::HPred,
            &[0.02, 0.01, 0.005, -1.0],
            SweepMetric::W2VsReference { refine: 8 },
        );
        assert!(err.is_err());
    }

    #[test]
    fn epsilon_sweep_requires_bias_direction() {
        let base = sweep_base();
        let err = run_sweep(
            &base,
            SweepParameter::EpsilonSc,
            &[0.05, 0.1, 0.2, 0.4],
            SweepMetric::W2VsReference { refine: 1 },
        );
        assert!(err.is_err());
    }

    /// Small smoke sweep: h_pred error against a refined reference shrinks
    /// monotonically and fits a near-unit slope.
    #[test]
    fn h_pred_sweep_smoke() {
        let base = sweep_base();
        let record = run_sweep(
            &base,
            SweepParameter::HPred,
            &[0.1, 0.05, 0.025, 0.0125],
            SweepMetric::W2VsReference { refine: 8 },
        )
        .unwrap();
        assert_eq!(record.points.len(), 4);
        for w in record.points.windows(2) {
            assert!(
                w[0].error > w[1].error,
                "errors not decreasing: {:?}",
                record.points
            );
        }
        assert!(
            (0.6..=1.4).contains(&record.slope),
            "slope {} stderr {}",
            record.slope,
            record.slope_stderr
        );
    }
}
