//! Time-indexed score oracle in reverse-time coordinates.
//!
//! Reverse time `t` in `[0, T]` addresses the marginal `q_t = q_{T-t}` of the
//! forward OU process; this module is the single place where that time flip
//! happens. The oracle returns the exact mixture score plus an optional,
//! precisely controlled perturbation standing in for score-estimation error.

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::numerics::{gaussian_vector, Phase, RngStream, StateVec, StreamId};

/// Controlled deviation from the exact score.
#[derive(Clone, Debug)]
pub enum Perturbation {
    /// Exact scores.
    None,
    /// Adds `epsilon * u` for a fixed unit vector `u`; the squared L2(q_t)
    /// error equals `epsilon^2` for every `t`.
    ConstantBias { epsilon: f64, direction: StateVec },
    /// Adds `epsilon * sin(omega * <u, x>) * u`; the field is
    /// `epsilon * omega`-Lipschitz with L2(q_t) norm at most `epsilon`.
    Sinusoidal {
        epsilon: f64,
        omega: f64,
        direction: StateVec,
    },
}

impl Perturbation {
    /// Unit direction drawn deterministically from `seed`.
    pub fn random_direction(d: usize, seed: u64) -> Result<StateVec> {
        let mut rng = RngStream::new(seed, StreamId::new(0, Phase::OracleDirection, 0));
        let mut v = gaussian_vector(&mut rng, d)?;
        let norm = v.norm();
        for x in v.as_mut_slice() {
            *x /= norm;
        }
        Ok(v)
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Perturbation::None => Ok(()),
            Perturbation::ConstantBias { epsilon, direction }
            | Perturbation::Sinusoidal {
                epsilon, direction, ..
            } => {
                if !(*epsilon >= 0.0) {
                    return Err(Error::InvalidArgument(
                        "perturbation epsilon must be >= 0".into(),
                    ));
                }
                if direction.dim() != d {
                    return Err(Error::DimensionMismatch {
                        left: direction.dim(),
                        right: d,
                        context: "perturbation direction",
                    });
                }
                if (direction.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(
                        "perturbation direction must be a unit vector".into(),
                    ));
                }
                if let Perturbation::Sinusoidal { omega, .. } = self {
                    if !(*omega >= 0.0) {
                        return Err(Error::InvalidArgument(
                            "perturbation omega must be >= 0".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Adds the perturbation field at `x` onto `out`.
    fn add_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Perturbation::None => {}
            Perturbation::ConstantBias { epsilon, direction } => {
                for (o, u) in out.iter_mut().zip(direction.as_slice()) {
                    *o += epsilon * u;
                }
            }
            Perturbation::Sinusoidal {
                epsilon,
                omega,
                direction,
            } => {
                let proj: f64 = direction
                    .as_slice()
                    .iter()
                    .zip(x)
                    .map(|(u, xi)| u * xi)
                    .sum();
                let amp = epsilon * (omega * proj).sin();
                for (o, u) in out.iter_mut().zip(direction.as_slice()) {
                    *o += amp * u;
                }
            }
        }
    }
}

/// Score estimates `s_t` for all reverse times `t` in `[0, T]`.
#[derive(Clone, Debug)]
pub struct ScoreOracle {
    base: GaussianMixture,
    horizon: f64,
    perturbation: Perturbation,
    base_lipschitz: f64,
}

impl ScoreOracle {
    pub fn new(
        base: GaussianMixture,
        horizon: f64,
        perturbation: Perturbation,
        base_lipschitz: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "oracle horizon must be positive, got {horizon}"
            )));
        }
        if !(base_lipschitz >= 1.0) {
            return Err(Error::InvalidArgument(
                "base Lipschitz constant must be >= 1".into(),
            ));
        }
        perturbation.validate(base.dim())?;
        Ok(ScoreOracle {
            base,
            horizon,
            perturbation,
            base_lipschitz,
        })
    }

    pub fn exact(base: GaussianMixture, horizon: f64, base_lipschitz: f64) -> Result<Self> {
        Self::new(base, horizon, Perturbation::None, base_lipschitz)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn base(&self) -> &GaussianMixture {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    /// Lipschitz constant of the estimate, used by schedule construction:
    /// the bias adds nothing, the sinusoidal field adds `epsilon * omega`.
    pub fn effective_lipschitz(&self) -> f64 {
        match &self.perturbation {
            Perturbation::None | Perturbation::ConstantBias { .. } => self.base_lipschitz,
            Perturbation::Sinusoidal { epsilon, omega, .. } => {
                self.base_lipschitz + epsilon * omega
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-9 * self.horizon.max(1.0);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::InvalidArgument(format!(
                "reverse time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Frozen view at reverse time `t`; cheap to evaluate at many points.
    pub fn at(&self, t: f64) -> Result<ScoreField<'_>> {
        self.check_time(t)?;
        let forward = (self.horizon - t).max(0.0);
        Ok(ScoreField {
            marginal: self.base.ou_marginal(forward)?,
            perturbation: &self.perturbation,
            reverse_time: t,
        })
    }

    /// `s_t(x)`: exact score of `q_t` plus the configured perturbation.
    pub fn eval(&self, t: f64, x: &StateVec) -> Result<StateVec> {
        let field = self.at(t)?;
        let mut out = vec![0.0; self.dim()];
        field.eval_into(x.as_slice(), &mut out);
        StateVec::new(out)
    }
}

/// Score estimate frozen at one reverse time.
#[derive(Clone, Debug)]
pub struct ScoreField<'a> {
    marginal: GaussianMixture,
    perturbation: &'a Perturbation,
    reverse_time: f64,
}

impl ScoreField<'_> {
    pub fn reverse_time(&self) -> f64 {
        self.reverse_time
    }

    /// The marginal `q_t` this field estimates the score of.
    pub fn marginal(&self) -> &GaussianMixture {
        &self.marginal
    }

    /// Writes `s_t(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.marginal.score_into(x, out);
        self.perturbation.add_into(x, out);
    }

    /// Writes the exact score of `q_t` (perturbation excluded) into `out`.
    pub fn exact_into(&self, x: &[f64], out: &mut [f64]) {
        self.marginal.score_into(x, out);
    }
}
