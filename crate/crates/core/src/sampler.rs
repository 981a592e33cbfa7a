//! End-to-end DPOM and DPUM orchestration.
//!
//! Both samplers draw the ensemble from the standard Gaussian, then run
//! `n_rounds` stage-1 rounds of one uniform predictor epoch followed by one
//! corrector epoch, then the stage-2 geometric predictor down to the
//! early-stopping time `T - delta`, then one final corrector epoch. DPOM
//! uses the overdamped corrector (epoch time scaling as `1/L`), DPUM the
//! underdamped corrector (epoch time `1/sqrt(L)`, friction `sqrt(L)` in
//! theory mode).

use std::time::Instant;

use crate::corrector::{
    run_corrector, run_corrector_instrumented, CorrectorConfig, CorrectorKind,
};
use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, SmoothnessInfo};
use crate::metrics::{
    mode_weights, tv_histogram, w2_exact, w2_sliced, GridSpec, TvReference, EXACT_W2_CAP,
};
use crate::numerics::{gaussian_vector, Phase, RngStream, StateVec, StreamId};
use crate::oracle::{Perturbation, ScoreOracle};
use crate::predictor::{run_predictor, Schedule};
use crate::report::{CheckpointRecord, RunReport};

/// Early-stopping time scale: `epsilon^2 / (L^2 max(d, m2^2))` with the
/// order constant fixed to one.
pub fn default_delta(epsilon: f64, lipschitz: f64, d: usize, m2: f64) -> f64 {
    epsilon * epsilon / (lipschitz * lipschitz * (d as f64).max(m2 * m2))
}

/// A set of particles at one reverse time.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub particles: Vec<StateVec>,
    pub reverse_time: f64,
    pub seed: u64,
}

/// Corrector time budget.
#[derive(Clone, Copy, Debug)]
pub enum CorrectorBudget {
    /// Epoch time `multiplier / L` (overdamped) or `multiplier / sqrt(L)`
    /// (underdamped); friction defaults to `sqrt(L)`.
    Theory { multiplier: f64 },
    /// Exactly `n_steps` steps of the configured step size.
    Explicit { n_steps: usize },
}

/// Which distance estimates each checkpoint records.
#[derive(Clone, Copy, Debug)]
pub struct MetricSettings {
    /// Reference sample count for W2 against the exact marginal (0 disables).
    pub w2_reference: usize,
    /// Projection count for the sliced estimator (used when the ensemble or
    /// reference exceeds the exact-assignment cap).
    pub slices: usize,
    /// Histogram bins per axis for TV when `d <= 3` (0 disables).
    pub tv_bins: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            w2_reference: 2048,
            slices: 64,
            tv_bins: 64,
        }
    }
}

/// Raw sampler settings; [`RunSettings::resolve`] turns them into an
/// executable [`RunPlan`], adjusting step sizes to meet the divisibility
/// requirements and logging every adjustment.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub mixture: GaussianMixture,
    pub horizon: f64,
    pub h_pred: f64,
    pub h_corr: f64,
    pub corrector_kind: CorrectorKind,
    pub budget: CorrectorBudget,
    /// Friction override; defaults to `sqrt(L)`.
    pub friction: Option<f64>,
    pub velocity_init_std: f64,
    /// Explicit early-stopping time; defaults to
    /// `default_delta(epsilon_target, L, d, m2)`.
    pub delta: Option<f64>,
    pub epsilon_target: f64,
    /// Stage-1 epoch length; defaults to `1/L`.
    pub epoch_length: Option<f64>,
    pub ensemble_size: usize,
    pub seed: u64,
    pub checkpoints: Vec<f64>,
    pub perturbation: Perturbation,
    /// Baseline mode skipping every corrector epoch.
    pub predictor_only: bool,
    pub smoothness_times: usize,
    pub smoothness_probes: usize,
    pub metrics: MetricSettings,
    /// Keep particle snapshots at checkpoints (for CSV export).
    pub keep_snapshots: bool,
}

impl RunSettings {
    pub fn new(mixture: GaussianMixture, kind: CorrectorKind) -> Self {
        RunSettings {
            mixture,
            horizon: 2.0,
            h_pred: 0.05,
            h_corr: 0.005,
            corrector_kind: kind,
            budget: CorrectorBudget::Theory { multiplier: 0.5 },
            friction: None,
            velocity_init_std: 1.0,
            delta: None,
            epsilon_target: 0.1,
            epoch_length: None,
            ensemble_size: 1024,
            seed: 0,
            checkpoints: Vec::new(),
            perturbation: Perturbation::None,
            predictor_only: false,
            smoothness_times: 20,
            smoothness_probes: 2000,
            metrics: MetricSettings::default(),
            keep_snapshots: false,
        }
    }

    pub fn resolve(self) -> Result<RunPlan> {
        if !(self.horizon > 0.0) || !(self.h_pred > 0.0) || !(self.h_corr > 0.0) {
            return Err(Error::InvalidArgument(
                "horizon, h_pred, and h_corr must be positive".into(),
            ));
        }
        if !(self.epsilon_target > 0.0) {
            return Err(Error::InvalidArgument("epsilon_target must be positive".into()));
        }
        let mut adjustments = Vec::new();
        let d = self.mixture.dim();

        let smooth_grid: Vec<f64> = (0..self.smoothness_times.max(2))
            .map(|i| self.horizon * i as f64 / (self.smoothness_times.max(2) - 1) as f64)
            .collect();
        let smoothness =
            self.mixture
                .smoothness(&smooth_grid, self.smoothness_probes, self.seed)?;
        let lipschitz = match &self.perturbation {
            Perturbation::Sinusoidal { epsilon, omega, .. } => {
                smoothness.lipschitz + epsilon * omega
            }
            _ => smoothness.lipschitz,
        };

        let epoch_length = match self.epoch_length {
            Some(e) if e > 0.0 => e,
            Some(e) => {
                return Err(Error::InvalidArgument(format!(
                    "epoch_length must be positive, got {e}"
                )))
            }
            None => 1.0 / lipschitz,
        };

        // h_pred must divide the epoch exactly: round the step count up.
        let n_pred = (epoch_length / self.h_pred - 1e-9).ceil().max(1.0) as usize;
        let h_pred = epoch_length / n_pred as f64;
        if (h_pred - self.h_pred).abs() > 1e-12 * self.h_pred.max(1e-12) {
            adjustments.push(format!(
                "h_pred adjusted from {} to {h_pred} ({} steps per epoch of {epoch_length})",
                self.h_pred, n_pred
            ));
        }

        // T = n_rounds * epoch + h_pred for an integer number of rounds.
        let n_rounds = ((self.horizon - h_pred) / epoch_length)
            .round()
            .max(1.0) as usize;
        let horizon = n_rounds as f64 * epoch_length + h_pred;
        if (horizon - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            adjustments.push(format!(
                "horizon adjusted from {} to {horizon} ({n_rounds} rounds)",
                self.horizon
            ));
        }

        // Early stopping: delta rounded down to a dyadic fraction of h_pred.
        let delta_req = match self.delta {
            Some(v) if v > 0.0 => v,
            Some(v) => {
                return Err(Error::InvalidArgument(format!(
                    "delta must be positive, got {v}"
                )))
            }
            None => default_delta(self.epsilon_target, lipschitz, d, smoothness.second_moment),
        };
        let k = ((h_pred / delta_req).log2().ceil().max(1.0) as i32).min(50);
        let delta = h_pred / f64::powi(2.0, k);
        if (delta - delta_req).abs() > 1e-12 * delta_req {
            adjustments.push(format!(
                "delta rounded from {delta_req} to dyadic {delta} (h_pred / 2^{k})"
            ));
        }

        // Corrector epoch budget.
        let friction = self.friction.unwrap_or_else(|| lipschitz.sqrt());
        let (corr_total, h_corr) = match self.budget {
            CorrectorBudget::Theory { multiplier } => {
                if !(multiplier > 0.0) {
                    return Err(Error::InvalidArgument(
                        "corrector budget multiplier must be positive".into(),
                    ));
                }
                let total = match self.corrector_kind {
                    CorrectorKind::Overdamped => multiplier / lipschitz,
                    CorrectorKind::Underdamped => multiplier / lipschitz.sqrt(),
                };
                let n_corr = (total / self.h_corr - 1e-9).ceil().max(1.0) as usize;
                let h_corr = total / n_corr as f64;
                if (h_corr - self.h_corr).abs() > 1e-12 * self.h_corr.max(1e-12) {
                    adjustments.push(format!(
                        "h_corr adjusted from {} to {h_corr} ({n_corr} steps per epoch of {total})",
                        self.h_corr
                    ));
                }
                (total, h_corr)
            }
            CorrectorBudget::Explicit { n_steps } => {
                (n_steps as f64 * self.h_corr, self.h_corr)
            }
        };
        let corrector = match self.corrector_kind {
            CorrectorKind::Overdamped => CorrectorConfig::overdamped(corr_total, h_corr)?,
            CorrectorKind::Underdamped => CorrectorConfig::underdamped(
                corr_total,
                h_corr,
                friction,
                self.velocity_init_std,
            )?,
        };

        let mut checkpoints = self.checkpoints.clone();
        checkpoints.sort_unstable_by(f64::total_cmp);
        checkpoints.dedup();
        if checkpoints.iter().any(|c| *c < 0.0 || *c > horizon + 1e-9) {
            return Err(Error::InvalidArgument(
                "checkpoints must lie in [0, horizon]".into(),
            ));
        }

        let oracle = ScoreOracle::new(
            self.mixture.clone(),
            horizon,
            self.perturbation.clone(),
            smoothness.lipschitz,
        )?;

        Ok(RunPlan {
            mixture: self.mixture,
            oracle,
            smoothness,
            lipschitz,
            horizon,
            epoch_length,
            n_rounds,
            h_pred,
            delta,
            corrector,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            checkpoints,
            predictor_only: self.predictor_only,
            metrics: self.metrics,
            keep_snapshots: self.keep_snapshots,
            adjustments,
        })
    }
}

/// Fully resolved, executable sampler plan.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub mixture: GaussianMixture,
    pub oracle: ScoreOracle,
    pub smoothness: SmoothnessInfo,
    /// Effective Lipschitz constant (estimate error included).
    pub lipschitz: f64,
    pub horizon: f64,
    pub epoch_length: f64,
    pub n_rounds: usize,
    pub h_pred: f64,
    pub delta: f64,
    pub corrector: CorrectorConfig,
    pub ensemble_size: usize,
    pub seed: u64,
    pub checkpoints: Vec<f64>,
    pub predictor_only: bool,
    pub metrics: MetricSettings,
    pub keep_snapshots: bool,
    pub adjustments: Vec<String>,
}

/// Output of one sampler run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ensemble: Ensemble,
    pub report: RunReport,
    /// Particle snapshots at each checkpoint, when requested.
    pub snapshots: Vec<(f64, Vec<StateVec>)>,
    /// Mean per-particle Girsanov divergence accumulated over corrector
    /// epochs, populated by instrumented runs.
    pub girsanov_kl: Option<GirsanovSummary>,
}

#[derive(Clone, Copy, Debug)]
pub struct GirsanovSummary {
    pub mean_kl: f64,
    pub stderr_kl: f64,
}

struct Checkpointer {
    pending: Vec<f64>,
    next: usize,
}

impl Checkpointer {
    fn due(&mut self, t: f64) -> bool {
        if self.next < self.pending.len() && self.pending[self.next] <= t + 1e-12 {
            self.next += 1;
            // Collapse several due checkpoints into one record.
            while self.next < self.pending.len() && self.pending[self.next] <= t + 1e-12 {
                self.next += 1;
            }
            true
        } else {
            false
        }
    }
}

fn checkpoint_record(plan: &RunPlan, particles: &[StateVec], t: f64, started: &Instant) -> Result<CheckpointRecord> {
    let d = plan.mixture.dim();
    let mut record = CheckpointRecord {
        reverse_time: t,
        runtime_seconds: Some(started.elapsed().as_secs_f64()),
        ..Default::default()
    };
    if particles.is_empty() {
        return Ok(record);
    }
    let n = particles.len();
    let mut mean = vec![0.0; d];
    for p in particles {
        for a in 0..d {
            mean[a] += p.as_slice()[a];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut variance = vec![0.0; d];
    for p in particles {
        for a in 0..d {
            let r = p.as_slice()[a] - mean[a];
            variance[a] += r * r;
        }
    }
    for v in variance.iter_mut() {
        *v /= n as f64;
    }
    record.mean = mean;
    record.variance = variance;

    let marginal = plan.mixture.ou_marginal(plan.horizon - t)?;
    record.mode_weights = mode_weights(particles, &marginal)?;

    if plan.metrics.w2_reference > 0 {
        let n_ref = plan.metrics.w2_reference;
        let tag = (t * 1e6).round() as u64;
        let reference: Vec<StateVec> = (0..n_ref)
            .map(|k| {
                let mut rng = RngStream::new(
                    plan.seed ^ 0x5ca1_ab1e,
                    StreamId::new(k as u64, Phase::MixtureGauss, tag),
                );
                marginal.sample(&mut rng)
            })
            .collect();
        if n <= EXACT_W2_CAP && n == n_ref {
            record.w2_to_exact = Some(w2_exact(particles, &reference)?);
        } else {
            let est = w2_sliced(particles, &reference, plan.metrics.slices, plan.seed ^ tag)?;
            record.w2_to_exact = Some(est.estimate);
            record.w2_stderr = Some(est.stderr);
        }
    }
    if plan.metrics.tv_bins > 0 && d <= 3 {
        let grid = GridSpec::covering(&marginal, plan.metrics.tv_bins)?;
        record.tv_to_exact = Some(tv_histogram(particles, TvReference::Mixture(&marginal), &grid)?);
    }
    Ok(record)
}

fn base_report(plan: &RunPlan, sampler: &str) -> RunReport {
    RunReport {
        sampler: sampler.into(),
        dimension: plan.mixture.dim(),
        ensemble_size: plan.ensemble_size,
        seed: plan.seed,
        horizon: plan.horizon,
        h_pred: plan.h_pred,
        h_corr: plan.corrector.step,
        delta: plan.delta,
        n_rounds: plan.n_rounds,
        lipschitz: plan.lipschitz,
        second_moment: plan.smoothness.second_moment,
        adjustments: plan.adjustments.clone(),
        checkpoints: Vec::new(),
        sweep: None,
    }
}

fn run_impl(plan: &RunPlan, instrument: bool) -> Result<RunOutput> {
    let started = Instant::now();
    let d = plan.mixture.dim();
    let sampler_name = if plan.predictor_only {
        "predictor-only"
    } else {
        match plan.corrector.kind {
            CorrectorKind::Overdamped => "dpom",
            CorrectorKind::Underdamped => "dpum",
        }
    };
    let mut report = base_report(plan, sampler_name);
    let mut snapshots = Vec::new();

    let mut particles: Vec<StateVec> = (0..plan.ensemble_size)
        .map(|k| {
            let mut rng = RngStream::new(plan.seed, StreamId::new(k as u64, Phase::EnsembleInit, 0));
            gaussian_vector(&mut rng, d)
        })
        .collect::<Result<_>>()?;
    let mut kl_accum = vec![0.0; particles.len()];

    let mut checkpointer = Checkpointer {
        pending: plan.checkpoints.clone(),
        next: 0,
    };
    let record_at = |particles: &[StateVec],
                     t: f64,
                     report: &mut RunReport,
                     snapshots: &mut Vec<(f64, Vec<StateVec>)>|
     -> Result<()> {
        report
            .checkpoints
            .push(checkpoint_record(plan, particles, t, &started)?);
        if plan.keep_snapshots {
            snapshots.push((t, particles.to_vec()));
        }
        Ok(())
    };

    let mut t = 0.0;
    if checkpointer.due(0.0) {
        record_at(&particles, 0.0, &mut report, &mut snapshots)?;
    }

    // Stage 1: uniform predictor epochs interleaved with corrector epochs.
    for round in 0..plan.n_rounds {
        let start = round as f64 * plan.epoch_length;
        let schedule = Schedule::uniform(start, plan.epoch_length, plan.h_pred)?;
        let reached = run_predictor(&mut particles, &schedule, &plan.oracle)?;
        t = (round + 1) as f64 * plan.epoch_length;
        if (reached - t).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "reverse-time drift in stage 1: {reached} vs {t}"
            )));
        }
        if !plan.predictor_only {
            if instrument {
                let epoch = run_corrector_instrumented(
                    &mut particles,
                    &plan.corrector,
                    &plan.oracle,
                    t,
                    plan.seed,
                    round as u32,
                )?;
                for (acc, kl) in kl_accum.iter_mut().zip(&epoch.kl_per_particle) {
                    *acc += kl;
                }
            } else {
                run_corrector(
                    &mut particles,
                    &plan.corrector,
                    &plan.oracle,
                    t,
                    plan.seed,
                    round as u32,
                )?;
            }
        }
        if checkpointer.due(t) {
            record_at(&particles, t, &mut report, &mut snapshots)?;
        }
    }

    // Stage 2: geometric step decay down to the early-stopping time.
    let stage2 = Schedule::geometric(t, plan.h_pred, plan.delta)?;
    let reached = run_predictor(&mut particles, &stage2, &plan.oracle)?;
    t = plan.horizon - plan.delta;
    if (reached - t).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "reverse-time drift in stage 2: {reached} vs {t}"
        )));
    }

    // Final corrector epoch at the early-stopped time.
    if !plan.predictor_only {
        if instrument {
            let epoch = run_corrector_instrumented(
                &mut particles,
                &plan.corrector,
                &plan.oracle,
                t,
                plan.seed,
                plan.n_rounds as u32,
            )?;
            for (acc, kl) in kl_accum.iter_mut().zip(&epoch.kl_per_particle) {
                *acc += kl;
            }
        } else {
            run_corrector(
                &mut particles,
                &plan.corrector,
                &plan.oracle,
                t,
                plan.seed,
                plan.n_rounds as u32,
            )?;
        }
    }

    // Always close with a record at T - delta.
    checkpointer.due(plan.horizon);
    record_at(&particles, t, &mut report, &mut snapshots)?;

    let girsanov_kl = if instrument && !kl_accum.is_empty() {
        let n = kl_accum.len() as f64;
        let mean = kl_accum.iter().sum::<f64>() / n;
        let var = kl_accum.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / n;
        Some(GirsanovSummary {
            mean_kl: mean,
            stderr_kl: (var / n).sqrt(),
        })
    } else {
        None
    };

    Ok(RunOutput {
        ensemble: Ensemble {
            particles,
            reverse_time: t,
            seed: plan.seed,
        },
        report,
        snapshots,
        girsanov_kl,
    })
}

/// Runs the plan as configured (DPOM, DPUM, or predictor-only).
pub fn run(plan: &RunPlan) -> Result<RunOutput> {
    run_impl(plan, false)
}

/// Runs the plan while accumulating the corrector path-divergence metric.
pub fn run_instrumented(plan: &RunPlan) -> Result<RunOutput> {
    run_impl(plan, true)
}

/// Probability flow predictor with overdamped corrector epochs.
pub fn dpom(plan: &RunPlan) -> Result<RunOutput> {
    if plan.corrector.kind != CorrectorKind::Overdamped {
        return Err(Error::InvalidArgument(
            "dpom requires an overdamped corrector".into(),
        ));
    }
    run(plan)
}

/// Probability flow predictor with underdamped corrector epochs.
pub fn dpum(plan: &RunPlan) -> Result<RunOutput> {
    if plan.corrector.kind != CorrectorKind::Underdamped {
        return Err(Error::InvalidArgument(
            "dpum requires an underdamped corrector".into(),
        ));
    }
    run(plan)
}
