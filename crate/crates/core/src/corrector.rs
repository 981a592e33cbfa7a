//! Overdamped and underdamped Langevin corrector epochs.
//!
//! A corrector epoch targets the marginal at one fixed reverse time: the
//! score estimate is frozen in time, refreshed in space at the start of each
//! step, and the epoch advances no reverse time.
//!
//! The overdamped step integrates `dx = s dt + sqrt(2) dB` with frozen `s`
//! exactly. The underdamped step integrates the frozen-drift linear system
//!
//! ```text
//! dz = v dt,    dv = (g - friction * v) dt + sqrt(2 * friction) dB
//! ```
//!
//! exactly as well: the one-step law is Gaussian per axis and is sampled
//! through its closed-form moments and a 2x2 Cholesky factor. Small
//! `friction * h` evaluates the variance through a series expansion because
//! the direct expression cancels catastrophically.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{Phase, RngStream, StateVec, StreamId};
use crate::oracle::{ScoreField, ScoreOracle};

const REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrectorKind {
    Overdamped,
    Underdamped,
}

/// Settings for one corrector epoch.
#[derive(Clone, Copy, Debug)]
pub struct CorrectorConfig {
    pub kind: CorrectorKind,
    /// Total epoch time; zero is the degenerate identity epoch.
    pub total_time: f64,
    pub step: f64,
    /// Friction, underdamped only.
    pub friction: f64,
    /// Standard deviation of the fresh velocity draw, underdamped only.
    pub velocity_init_std: f64,
}

impl CorrectorConfig {
    pub fn overdamped(total_time: f64, step: f64) -> Result<Self> {
        let cfg = CorrectorConfig {
            kind: CorrectorKind::Overdamped,
            total_time,
            step,
            friction: f64::NAN,
            velocity_init_std: f64::NAN,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn underdamped(
        total_time: f64,
        step: f64,
        friction: f64,
        velocity_init_std: f64,
    ) -> Result<Self> {
        let cfg = CorrectorConfig {
            kind: CorrectorKind::Underdamped,
            total_time,
            step,
            friction,
            velocity_init_std,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time >= 0.0) {
            return Err(Error::InvalidArgument(
                "corrector total_time must be >= 0".into(),
            ));
        }
        if self.total_time > 0.0 {
            if !(self.step > 0.0) {
                return Err(Error::InvalidArgument("corrector step must be > 0".into()));
            }
            let ratio = self.total_time / self.step;
            if (ratio - ratio.round()).abs() > REL_TOL * ratio.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "corrector total_time {} is not a multiple of step {}",
                    self.total_time, self.step
                )));
            }
        }
        if self.kind == CorrectorKind::Underdamped && self.total_time > 0.0 {
            if !(self.friction > 0.0) {
                return Err(Error::InvalidArgument("friction must be > 0".into()));
            }
            if !(self.velocity_init_std >= 0.0) {
                return Err(Error::InvalidArgument(
                    "velocity_init_std must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        if self.total_time == 0.0 {
            0
        } else {
            (self.total_time / self.step).round() as usize
        }
    }
}

/// One overdamped step on raw coordinates: `x += h*g + sqrt(2h) * xi`.
pub fn overdamped_step_into(x: &mut [f64], h: f64, g: &[f64], rng: &mut RngStream) {
    let noise = (2.0 * h).sqrt();
    for a in 0..x.len() {
        x[a] += h * g[a] + noise * rng.standard_normal();
    }
}

/// One overdamped step: `x + h*s(x) + sqrt(2h) * xi` with a frozen score value.
pub fn overdamped_step(x: &StateVec, h: f64, g: &StateVec, rng: &mut RngStream) -> Result<StateVec> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("overdamped step needs h > 0".into()));
    }
    if x.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: g.dim(),
            context: "overdamped_step",
        });
    }
    let mut out = x.as_slice().to_vec();
    overdamped_step_into(&mut out, h, g.as_slice(), rng);
    StateVec::new(out)
}

/// Per-axis moments of the exact underdamped one-step kernel with frozen
/// drift value `g`:
///
/// ```text
/// mean_v = decay * v + a * g           decay = e^{-friction h}, a = (1-decay)/friction
/// mean_z = z + a * v + b * g           b = (h - a)/friction
/// var_v  = 1 - decay^2
/// cov_zv = (1 - decay)^2 / friction
/// var_z  = (2/friction^2) * (x - 2(1-e^{-x}) + (1-e^{-2x})/2),  x = friction h
/// ```
#[derive(Clone, Copy, Debug)]
pub struct UnderdampedMoments {
    pub decay: f64,
    pub vz_gain: f64, // a
    pub gz_gain: f64, // b
    pub var_z: f64,
    pub var_v: f64,
    pub cov_zv: f64,
    chol_zz: f64,
    chol_vz: f64,
    chol_vv: f64,
}

/// `x - 2(1 - e^{-x}) + (1 - e^{-2x})/2`, switching to its series for small
/// `x` where the direct form loses all precision to cancellation.
fn var_z_shape(x: f64) -> f64 {
    if x < 0.015 {
        // x^3/3 - x^4/4 + 7x^5/60 - x^6/24 + 31x^7/2520
        let x2 = x * x;
        let x3 = x2 * x;
        x3 * (1.0 / 3.0 - x / 4.0 + 7.0 * x2 / 60.0 - x3 / 24.0 + 31.0 * x3 * x / 2520.0)
    } else {
        x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()
    }
}

/// `x - (1 - e^{-x})` with a series branch for small `x`.
fn gz_shape(x: f64) -> f64 {
    if x < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        x + (-x).exp_m1()
    }
}

impl UnderdampedMoments {
    pub fn new(h: f64, friction: f64) -> Result<Self> {
        if !(h > 0.0 && friction > 0.0) {
            return Err(Error::InvalidArgument(
                "underdamped kernel needs h > 0 and friction > 0".into(),
            ));
        }
        let x = friction * h;
        let decay = (-x).exp();
        let one_minus = -(-x).exp_m1();
        let vz_gain = one_minus / friction;
        let gz_gain = gz_shape(x) / (friction * friction);
        let var_v = -(-2.0 * x).exp_m1();
        let cov_zv = one_minus * one_minus / friction;
        let var_z = 2.0 * var_z_shape(x) / (friction * friction);
        let chol_zz = var_z.sqrt();
        let chol_vz = cov_zv / chol_zz;
        let chol_vv = (var_v - chol_vz * chol_vz).max(0.0).sqrt();
        Ok(UnderdampedMoments {
            decay,
            vz_gain,
            gz_gain,
            var_z,
            var_v,
            cov_zv,
            chol_zz,
            chol_vz,
            chol_vv,
        })
    }

    pub fn mean_z(&self, z: f64, v: f64, g: f64) -> f64 {
        z + self.vz_gain * v + self.gz_gain * g
    }

    pub fn mean_v(&self, v: f64, g: f64) -> f64 {
        self.decay * v + self.vz_gain * g
    }

    /// Advances one axis in place, drawing the correlated `(z, v)` fluctuation.
    pub fn step_axis(&self, z: &mut f64, v: &mut f64, g: f64, rng: &mut RngStream) {
        let xi_z = rng.standard_normal();
        let xi_v = rng.standard_normal();
        let new_z = self.mean_z(*z, *v, g) + self.chol_zz * xi_z;
        let new_v = self.mean_v(*v, g) + self.chol_vz * xi_z + self.chol_vv * xi_v;
        *z = new_z;
        *v = new_v;
    }
}

/// One exact underdamped step with frozen score value `g`.
pub fn underdamped_step(
    z: &StateVec,
    v: &StateVec,
    h: f64,
    friction: f64,
    g: &StateVec,
    rng: &mut RngStream,
) -> Result<(StateVec, StateVec)> {
    if z.dim() != v.dim() || z.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            left: z.dim(),
            right: v.dim().max(g.dim()),
            context: "underdamped_step",
        });
    }
    let moments = UnderdampedMoments::new(h, friction)?;
    let mut zs = z.as_slice().to_vec();
    let mut vs = v.as_slice().to_vec();
    for a in 0..zs.len() {
        moments.step_axis(&mut zs[a], &mut vs[a], g.as_slice()[a], rng);
    }
    Ok((StateVec::new(zs)?, StateVec::new(vs)?))
}

/// Path-divergence accumulator: per-particle Girsanov integrals
/// `(1/4c) * sum_steps int ||s_t(start) - grad ln q_t(path)||^2 du`
/// with `c = 1` for the overdamped and `c = friction` for the underdamped
/// corrector. This is the quantity whose square root the corrector terms of
/// the error bounds control; the integral is evaluated by Simpson's rule on
/// the step's start, midpoint, and endpoint.
#[derive(Clone, Debug, Default)]
pub struct GirsanovEpoch {
    pub kl_per_particle: Vec<f64>,
}

impl GirsanovEpoch {
    pub fn total(&self) -> f64 {
        self.kl_per_particle.iter().sum()
    }
}

fn mismatch_sq(field: &ScoreField<'_>, x: &[f64], frozen: &[f64], scratch: &mut [f64]) -> f64 {
    field.exact_into(x, scratch);
    frozen
        .iter()
        .zip(scratch.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

struct EpochContext<'a> {
    cfg: &'a CorrectorConfig,
    field: &'a ScoreField<'a>,
    seed: u64,
    round: u32,
    instrument: bool,
}

fn run_overdamped(
    ctx: &EpochContext<'_>,
    offset: usize,
    particles: &mut [StateVec],
    kl: &mut [f64],
) -> Result<()> {
    let h = ctx.cfg.step;
    let n_steps = ctx.cfg.n_steps();
    let d = particles[0].dim();
    let full_noise = (2.0 * h).sqrt();
    let half_noise = h.sqrt(); // sqrt(2 * h/2)
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for (i, p) in particles.iter_mut().enumerate() {
        let particle = (offset + i) as u64;
        let mut rng = RngStream::new(
            ctx.seed,
            StreamId::new(particle, Phase::OverdampedNoise, ctx.round as u64),
        );
        let x = p.as_mut_slice();
        for _k in 0..n_steps {
            ctx.field.eval_into(x, &mut g);
            if ctx.instrument {
                let m0 = mismatch_sq(ctx.field, x, &g, &mut scratch);
                for a in 0..d {
                    x[a] += 0.5 * h * g[a] + half_noise * rng.standard_normal();
                }
                let m_mid = mismatch_sq(ctx.field, x, &g, &mut scratch);
                for a in 0..d {
                    x[a] += 0.5 * h * g[a] + half_noise * rng.standard_normal();
                }
                let m_end = mismatch_sq(ctx.field, x, &g, &mut scratch);
                kl[i] += h / 6.0 * (m0 + 4.0 * m_mid + m_end) / 4.0;
            } else {
                for a in 0..d {
                    x[a] += h * g[a] + full_noise * rng.standard_normal();
                }
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(format!(
                "overdamped corrector at reverse time {} (particle {particle})",
                ctx.field.reverse_time()
            )));
        }
    }
    Ok(())
}

fn run_underdamped(
    ctx: &EpochContext<'_>,
    offset: usize,
    particles: &mut [StateVec],
    kl: &mut [f64],
) -> Result<()> {
    let h = ctx.cfg.step;
    let friction = ctx.cfg.friction;
    let n_steps = ctx.cfg.n_steps();
    let d = particles[0].dim();
    let full = UnderdampedMoments::new(h, friction)?;
    let half = UnderdampedMoments::new(0.5 * h, friction)?;
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut v = vec![0.0; d];
    for (i, p) in particles.iter_mut().enumerate() {
        let particle = (offset + i) as u64;
        let mut vel_rng = RngStream::new(
            ctx.seed,
            StreamId::new(particle, Phase::VelocityInit, ctx.round as u64),
        );
        for w in v.iter_mut() {
            *w = ctx.cfg.velocity_init_std * vel_rng.standard_normal();
        }
        let mut rng = RngStream::new(
            ctx.seed,
            StreamId::new(particle, Phase::UnderdampedNoise, ctx.round as u64),
        );
        let z = p.as_mut_slice();
        for _k in 0..n_steps {
            ctx.field.eval_into(z, &mut g);
            if ctx.instrument {
                let m0 = mismatch_sq(ctx.field, z, &g, &mut scratch);
                for a in 0..d {
                    half.step_axis(&mut z[a], &mut v[a], g[a], &mut rng);
                }
                let m_mid = mismatch_sq(ctx.field, z, &g, &mut scratch);
                for a in 0..d {
                    half.step_axis(&mut z[a], &mut v[a], g[a], &mut rng);
                }
                let m_end = mismatch_sq(ctx.field, z, &g, &mut scratch);
                kl[i] += h / 6.0 * (m0 + 4.0 * m_mid + m_end) / (4.0 * friction);
            } else {
                for a in 0..d {
                    full.step_axis(&mut z[a], &mut v[a], g[a], &mut rng);
                }
            }
        }
        // Velocity is discarded; only positions leave the epoch.
        if !z.iter().all(|w| w.is_finite()) {
            return Err(Error::non_finite(format!(
                "underdamped corrector at reverse time {} (particle {particle})",
                ctx.field.reverse_time()
            )));
        }
    }
    Ok(())
}

fn run_epoch(
    particles: &mut [StateVec],
    cfg: &CorrectorConfig,
    oracle: &ScoreOracle,
    t: f64,
    seed: u64,
    round: u32,
    instrument: bool,
) -> Result<GirsanovEpoch> {
    cfg.validate()?;
    let mut kl = vec![0.0; particles.len()];
    if cfg.n_steps() == 0 || particles.is_empty() {
        return Ok(GirsanovEpoch {
            kl_per_particle: kl,
        });
    }
    let field = oracle.at(t)?;
    let chunk = crate::PAR_CHUNK;
    particles
        .par_chunks_mut(chunk)
        .zip(kl.par_chunks_mut(chunk))
        .enumerate()
        .try_for_each(|(ci, (pchunk, kchunk))| {
            let ctx = EpochContext {
                cfg,
                field: &field,
                seed,
                round,
                instrument,
            };
            match cfg.kind {
                CorrectorKind::Overdamped => run_overdamped(&ctx, ci * chunk, pchunk, kchunk),
                CorrectorKind::Underdamped => run_underdamped(&ctx, ci * chunk, pchunk, kchunk),
            }
        })?;
    Ok(GirsanovEpoch {
        kl_per_particle: kl,
    })
}

/// Runs one corrector epoch in place at fixed reverse time `t`.
///
/// Underdamped epochs draw a fresh velocity per particle and discard it at
/// the end. `round` keys the noise streams so distinct epochs never share
/// randomness.
pub fn run_corrector(
    particles: &mut [StateVec],
    cfg: &CorrectorConfig,
    oracle: &ScoreOracle,
    t: f64,
    seed: u64,
    round: u32,
) -> Result<()> {
    run_epoch(particles, cfg, oracle, t, seed, round, false).map(|_| ())
}

/// Like [`run_corrector`] but also accumulates the per-particle Girsanov
/// path divergence of the epoch (each step simulated as two half steps so
/// the midpoint state is available).
pub fn run_corrector_instrumented(
    particles: &mut [StateVec],
    cfg: &CorrectorConfig,
    oracle: &ScoreOracle,
    t: f64,
    seed: u64,
    round: u32,
) -> Result<GirsanovEpoch> {
    run_epoch(particles, cfg, oracle, t, seed, round, true)
}
