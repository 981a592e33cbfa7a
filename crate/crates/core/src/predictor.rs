//! Discretized probability flow ODE and predictor step-size schedules.
//!
//! One predictor step integrates the linear part of
//! `dx/dt = x + s_t(x)` exactly over `[t, t+h]` while freezing the score at
//! the left endpoint:
//!
//! ```text
//! x_{t+h} = e^h x_t + (e^h - 1) s_t(x_t)
//! ```
//!
//! Stage 1 of the samplers uses uniform steps over epochs of fixed length;
//! stage 2 uses a geometrically decaying schedule that halves the remaining
//! gap to the horizon until it lands exactly on `T - delta`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::StateVec;
use crate::oracle::{ScoreField, ScoreOracle};

const REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Uniform,
    Geometric,
}

/// A sequence of positive predictor step sizes starting at reverse time
/// `start_time`.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub start_time: f64,
    pub steps: Vec<f64>,
    pub kind: ScheduleKind,
}

impl Schedule {
    /// `N = epoch_length / h_pred` equal steps; `epoch_length` must be an
    /// integer multiple of `h_pred` within relative tolerance `1e-9`.
    pub fn uniform(start_time: f64, epoch_length: f64, h_pred: f64) -> Result<Self> {
        if !(epoch_length > 0.0 && h_pred > 0.0) {
            return Err(Error::InvalidArgument(
                "uniform schedule needs positive epoch length and step".into(),
            ));
        }
        let ratio = epoch_length / h_pred;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > REL_TOL * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "epoch length {epoch_length} is not a multiple of h_pred {h_pred}"
            )));
        }
        Ok(Schedule {
            start_time,
            steps: vec![h_pred; n as usize],
            kind: ScheduleKind::Uniform,
        })
    }

    /// Geometric stage-2 schedule covering `[start_time, start_time + h_pred - delta]`.
    ///
    /// Each step takes half the remaining gap to the horizon, so
    /// `h_{n+1} <= (gap_n)/2` holds at every index; once halving would drop
    /// below `delta` a final clamped step lands exactly on the early-stopping
    /// time, giving `sum(steps) = h_pred - delta` and `N = O(log(h_pred/delta))`.
    pub fn geometric(start_time: f64, h_pred: f64, delta: f64) -> Result<Self> {
        if !(h_pred > 0.0) {
            return Err(Error::InvalidArgument("h_pred must be positive".into()));
        }
        if !(delta > 0.0 && delta <= 0.5 * h_pred * (1.0 + REL_TOL)) {
            return Err(Error::InvalidArgument(format!(
                "geometric schedule needs 0 < delta <= h_pred/2, got delta={delta}, h_pred={h_pred}"
            )));
        }
        let mut steps = Vec::new();
        let mut gap = h_pred;
        let tol = 1e-12 * h_pred;
        while gap - delta > tol {
            let mut h = 0.5 * gap;
            if h < delta {
                h = gap - delta;
            }
            steps.push(h);
            gap -= h;
        }
        // Pin the sum to h_pred - delta exactly.
        let target = h_pred - delta;
        let sum: f64 = steps.iter().sum();
        if let Some(last) = steps.last_mut() {
            *last += target - sum;
        }
        Ok(Schedule {
            start_time,
            steps,
            kind: ScheduleKind::Geometric,
        })
    }

    pub fn total_time(&self) -> f64 {
        self.steps.iter().sum()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.total_time()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One exponential-integrator step with a precomputed score value.
pub fn predictor_step_with(x: &StateVec, h: f64, score: &[f64]) -> Result<StateVec> {
    let growth = h.exp();
    let gain = h.exp_m1();
    let out: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(score)
        .map(|(xi, si)| growth * xi + gain * si)
        .collect();
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::non_finite("predictor step"));
    }
    Ok(StateVec::new(out)?)
}

/// One predictor step from reverse time `t` with step `h <= T - t`.
pub fn predictor_step(x: &StateVec, t: f64, h: f64, oracle: &ScoreOracle) -> Result<StateVec> {
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative step {h}")));
    }
    if t + h > oracle.horizon() * (1.0 + REL_TOL) + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "step past horizon: t={t}, h={h}, T={}",
            oracle.horizon()
        )));
    }
    let field = oracle.at(t)?;
    let mut s = vec![0.0; x.dim()];
    field.eval_into(x.as_slice(), &mut s);
    predictor_step_with(x, h, &s)
}

fn step_particles(particles: &mut [StateVec], field: &ScoreField<'_>, h: f64) -> Result<()> {
    let growth = h.exp();
    let gain = h.exp_m1();
    particles
        .par_chunks_mut(crate::PAR_CHUNK)
        .try_for_each(|chunk| -> Result<()> {
            let d = chunk[0].dim();
            let mut s = vec![0.0; d];
            for p in chunk {
                field.eval_into(p.as_slice(), &mut s);
                let xs = p.as_mut_slice();
                for a in 0..d {
                    xs[a] = growth * xs[a] + gain * s[a];
                    if !xs[a].is_finite() {
                        return Err(Error::non_finite(format!(
                            "predictor step at reverse time {}",
                            field.reverse_time()
                        )));
                    }
                }
            }
            Ok(())
        })
}

/// Folds the schedule over every particle in place; returns the reverse time
/// after the last step. The score is frozen per step at the left endpoint,
/// shared across particles, and particles advance independently in parallel.
pub fn run_predictor(
    particles: &mut [StateVec],
    schedule: &Schedule,
    oracle: &ScoreOracle,
) -> Result<f64> {
    let mut t = schedule.start_time;
    for &h in &schedule.steps {
        if t + h > oracle.horizon() * (1.0 + REL_TOL) + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "schedule escapes horizon: t={t}, h={h}, T={}",
                oracle.horizon()
            )));
        }
        let field = oracle.at(t)?;
        step_particles(particles, &field, h)?;
        t += h;
    }
    Ok(t)
}

/// Single-state variant of [`run_predictor`].
pub fn run_predictor_state(
    x: &StateVec,
    schedule: &Schedule,
    oracle: &ScoreOracle,
) -> Result<(StateVec, f64)> {
    let mut particles = [x.clone()];
    let t = run_predictor(&mut particles, schedule, oracle)?;
    let [out] = particles;
    Ok((out, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{Component, GaussianMixture};
    use crate::numerics::{Phase, RngStream, StreamId};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_step_is_identity() {
        let oracle = ScoreOracle::exact(GaussianMixture::standard(2).unwrap(), 1.0, 1.0).unwrap();
        let x = StateVec::new(vec![0.7, -0.2]).unwrap();
        let y = predictor_step(&x, 0.3, 0.0, &oracle).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn standard_gaussian_is_a_fixed_point() {
        let oracle = ScoreOracle::exact(GaussianMixture::standard(3).unwrap(), 2.0, 1.0).unwrap();
        let x = StateVec::new(vec![1.4, -0.3, 0.05]).unwrap();
        let y = predictor_step(&x, 0.5, 0.25, &oracle).unwrap();
        for i in 0..3 {
            assert_relative_eq!(y.as_slice()[i], x.as_slice()[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_score_doubles_in_ln2_time() {
        let x = StateVec::new(vec![1.0, 0.0]).unwrap();
        let y = predictor_step_with(&x, std::f64::consts::LN_2, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(y.as_slice()[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(y.as_slice()[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn step_past_horizon_rejected() {
        let oracle = ScoreOracle::exact(GaussianMixture::standard(1).unwrap(), 1.0, 1.0).unwrap();
        let x = StateVec::new(vec![0.0]).unwrap();
        assert!(predictor_step(&x, 0.9, 0.2, &oracle).is_err());
    }

    #[test]
    fn uniform_schedule_examples() {
        let s = Schedule::uniform(0.0, 0.5, 0.1).unwrap();
        assert_eq!(s.steps, vec![0.1; 5]);
        let single = Schedule::uniform(0.0, 0.1, 0.1).unwrap();
        assert_eq!(single.len(), 1);
        assert!(Schedule::uniform(0.0, 0.5, 0.3).is_err());
    }

    #[test]
    fn geometric_schedule_dyadic_halving() {
        let s = Schedule::geometric(0.0, 0.04, 0.0025).unwrap();
        let expect = [0.02, 0.01, 0.005, 0.0025];
        assert_eq!(s.len(), 4);
        for (a, b) in s.steps.iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        assert_relative_eq!(s.total_time(), 0.0375, max_relative = 1e-12);
    }

    #[test]
    fn geometric_schedule_single_step() {
        let s = Schedule::geometric(0.0, 0.04, 0.02).unwrap();
        assert_eq!(s.len(), 1);
        assert_relative_eq!(s.steps[0], 0.02, max_relative = 1e-12);
    }

    #[test]
    fn geometric_schedule_non_dyadic_clamp() {
        let s = Schedule::geometric(0.0, 0.04, 0.003).unwrap();
        assert!((s.total_time() - 0.037).abs() < 1e-12);
        // Appendix-style inequality: each step at most half the remaining gap.
        let mut gap = 0.04;
        for &h in &s.steps {
            assert!(h <= 0.5 * gap + 1e-12, "step {h} too large for gap {gap}");
            gap -= h;
        }
        assert!(Schedule::geometric(0.0, 0.04, 0.021).is_err());
    }

    proptest! {
        #[test]
        fn geometric_schedule_invariants(exp in 1u32..10, frac in 1e-3f64..0.5) {
            let h_pred = 0.04;
            let delta = h_pred * frac / (1 << exp) as f64;
            let s = Schedule::geometric(1.0, h_pred, delta).unwrap();
            prop_assert!((s.total_time() - (h_pred - delta)).abs() < 1e-12);
            let mut gap = h_pred;
            for &h in &s.steps {
                prop_assert!(h > 0.0);
                prop_assert!(h <= 0.5 * gap + 1e-12);
                gap -= h;
            }
            // Step count stays logarithmic in h_pred/delta.
            let bound = 2.0 * (h_pred / delta).ln().max(1.0) + 4.0;
            prop_assert!((s.len() as f64) <= bound);
        }
    }

    /// Reference oracle: classical RK4 with 100 substeps per predictor step
    /// on the time-inhomogeneous probability flow ODE.
    fn rk4_reference(q0: &GaussianMixture, horizon: f64, x0: f64, t0: f64, h: f64) -> f64 {
        let n_sub = 100;
        let dt = h / n_sub as f64;
        let mut x = x0;
        let mut t = t0;
        let f = |t: f64, x: f64| -> f64 {
            let qt = q0.ou_marginal(horizon - t).unwrap();
            let mut s = [0.0];
            qt.score_into(&[x], &mut s);
            x + s[0]
        };
        for _ in 0..n_sub {
            let k1 = f(t, x);
            let k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1);
            let k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2);
            let k4 = f(t + dt, x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
        }
        x
    }

    /// One-step mapping error against the RK4 oracle is O(h^2): halving h
    /// shrinks it by roughly 4x across a decade of step sizes.
    #[test]
    fn per_step_error_is_second_order() {
        let q0 = GaussianMixture::new(vec![
            Component::isotropic(0.5, vec![-1.0], 0.5),
            Component::isotropic(0.5, vec![1.5], 0.7),
        ])
        .unwrap();
        let horizon = 3.0;
        let oracle = ScoreOracle::exact(q0.clone(), horizon, 5.0).unwrap();
        let (t0, x0) = (0.5, 0.7);
        let hs = [0.08, 0.04, 0.02, 0.01, 0.005];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let x = StateVec::new(vec![x0]).unwrap();
                let stepped = predictor_step(&x, t0, h, &oracle).unwrap();
                (stepped.as_slice()[0] - rk4_reference(&q0, horizon, x0, t0, h)).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (3.4..=4.6).contains(&ratio),
                "halving ratio {ratio} outside [3.4, 4.6]; errors {errs:?}"
            );
        }
    }

    #[test]
    fn empty_schedule_is_identity() {
        let oracle = ScoreOracle::exact(GaussianMixture::standard(2).unwrap(), 1.0, 1.0).unwrap();
        let schedule = Schedule {
            start_time: 0.2,
            steps: vec![],
            kind: ScheduleKind::Uniform,
        };
        let x = StateVec::new(vec![0.5, -0.5]).unwrap();
        let (y, t) = run_predictor_state(&x, &schedule, &oracle).unwrap();
        assert_eq!(x, y);
        assert_eq!(t, 0.2);
    }

    #[test]
    fn ensemble_of_standard_gaussian_unchanged_pointwise() {
        let oracle = ScoreOracle::exact(GaussianMixture::standard(2).unwrap(), 2.0, 1.0).unwrap();
        let schedule = Schedule::uniform(0.3, 1.0, 0.125).unwrap();
        let mut particles: Vec<StateVec> = (0..64u64)
            .map(|k| {
                let mut rng = RngStream::new(3, StreamId::new(k, Phase::Test, 0));
                crate::numerics::gaussian_vector(&mut rng, 2).unwrap()
            })
            .collect();
        let reference = particles.clone();
        let t = run_predictor(&mut particles, &schedule, &oracle).unwrap();
        assert_relative_eq!(t, 1.3, epsilon = 1e-12);
        for (p, r) in particles.iter().zip(&reference) {
            for a in 0..2 {
                assert_relative_eq!(p.as_slice()[a], r.as_slice()[a], epsilon = 1e-12);
            }
        }
    }

    /// Transport oracle: integrating the full reverse horizon from exact
    /// `q_0` samples must land on the closed-form `q_delta` moments.
    #[test]
    fn full_horizon_transport_matches_marginal_moments() {
        let q0 = GaussianMixture::new(vec![Component::isotropic(1.0, vec![3.0], 1.0)]).unwrap();
        let horizon = 5.0;
        let delta = 1e-3;
        let oracle = ScoreOracle::exact(q0.clone(), horizon, 1.0).unwrap();
        let schedule = Schedule::uniform(0.0, horizon - delta, (horizon - delta) / 49990.0).unwrap();
        let start = q0.ou_marginal(horizon).unwrap();
        let n = 50_000usize;
        let mut particles: Vec<StateVec> = (0..n)
            .map(|k| {
                let mut rng = RngStream::new(8, StreamId::new(k as u64, Phase::Test, 1));
                start.sample(&mut rng)
            })
            .collect();
        run_predictor(&mut particles, &schedule, &oracle).unwrap();
        let mean: f64 = particles.iter().map(|p| p.as_slice()[0]).sum::<f64>() / n as f64;
        let var: f64 = particles
            .iter()
            .map(|p| (p.as_slice()[0] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let target = q0.ou_marginal(delta).unwrap();
        let c = &target.components()[0];
        assert!(
            (mean - c.mean[0]).abs() / c.mean[0].abs() < 0.02,
            "mean {mean} vs {}",
            c.mean[0]
        );
        assert!(
            (var - c.variance[0]).abs() / c.variance[0] < 0.02,
            "var {var} vs {}",
            c.variance[0]
        );
    }
}
