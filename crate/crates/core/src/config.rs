//! TOML run configuration: strict parsing, validation, canonical emission,
//! and conversion into resolved sampler settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrector::CorrectorKind;
use crate::error::{Error, Result};
use crate::gmm::{Component, GaussianMixture};
use crate::numerics::StateVec;
use crate::oracle::Perturbation;
use crate::sampler::{CorrectorBudget, MetricSettings, RunSettings};
use crate::sweep::{SweepMetric, SweepParameter};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarianceSpec {
    Isotropic(f64),
    PerAxis(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: VarianceSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub components: Vec<ComponentSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// `none`, `constant_bias`, or `sinusoidal`.
    pub kind: String,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub direction_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub horizon: f64,
    pub h_pred: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_epsilon_target")]
    pub epsilon_target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_length: Option<f64>,
    #[serde(default)]
    pub predictor_only: bool,
}

fn default_epsilon_target() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorSpec {
    /// `overdamped` or `underdamped`.
    pub kind: String,
    pub h_corr: f64,
    /// `theory` (epoch time from the Lipschitz constant) or `explicit`.
    #[serde(default = "default_budget")]
    pub budget: String,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,
    #[serde(default = "default_velocity_std")]
    pub velocity_init_std: f64,
}

fn default_budget() -> String {
    "theory".into()
}

fn default_multiplier() -> f64 {
    0.5
}

fn default_velocity_std() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub ensemble_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub emit_ensembles: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "default_w2_reference")]
    pub w2_reference: usize,
    #[serde(default = "default_slices")]
    pub slices: usize,
    #[serde(default = "default_tv_bins")]
    pub tv_bins: usize,
}

fn default_w2_reference() -> usize {
    2048
}

fn default_slices() -> usize {
    64
}

fn default_tv_bins() -> usize {
    64
}

impl Default for MetricsSpec {
    fn default() -> Self {
        MetricsSpec {
            w2_reference: default_w2_reference(),
            slices: default_slices(),
            tv_bins: default_tv_bins(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessSpec {
    #[serde(default = "default_smoothness_times")]
    pub times: usize,
    #[serde(default = "default_smoothness_probes")]
    pub probes: usize,
}

fn default_smoothness_times() -> usize {
    20
}

fn default_smoothness_probes() -> usize {
    2000
}

impl Default for SmoothnessSpec {
    fn default() -> Self {
        SmoothnessSpec {
            times: default_smoothness_times(),
            probes: default_smoothness_probes(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `h_pred`, `h_corr`, or `epsilon_sc`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// `w2_vs_reference`, `w2_vs_exact`, or `corrector_divergence`.
    #[serde(default = "default_sweep_metric")]
    pub metric: String,
    #[serde(default = "default_refine")]
    pub refine: u32,
    #[serde(default = "default_w2_reference")]
    pub reference_size: usize,
}

fn default_sweep_metric() -> String {
    "w2_vs_reference".into()
}

fn default_refine() -> u32 {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default)]
    pub corrupt_score: bool,
    #[serde(default = "default_reparam_inner")]
    pub reparam_inner_step: f64,
    #[serde(default = "default_reparam_t_max")]
    pub reparam_t_max: f64,
    #[serde(default = "default_reparam_particles")]
    pub reparam_particles: usize,
    #[serde(default = "default_perturbation_times")]
    pub perturbation_times: Vec<f64>,
    #[serde(default = "default_perturbation_particles")]
    pub perturbation_particles: usize,
    #[serde(default = "default_forward_horizons")]
    pub forward_horizons: Vec<f64>,
    #[serde(default = "default_forward_samples")]
    pub forward_samples: usize,
    #[serde(default = "default_forward_slices")]
    pub forward_slices: usize,
    #[serde(default = "default_kernel_inner_divisor")]
    pub kernel_inner_divisor: usize,
}

fn default_reparam_inner() -> f64 {
    1e-5
}

fn default_reparam_t_max() -> f64 {
    1.0
}

fn default_reparam_particles() -> usize {
    100
}

fn default_perturbation_times() -> Vec<f64> {
    vec![0.05, 0.1, 0.5, 1.0, 2.0]
}

fn default_perturbation_particles() -> usize {
    256
}

fn default_forward_horizons() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0]
}

fn default_forward_samples() -> usize {
    16_384
}

fn default_forward_slices() -> usize {
    128
}

fn default_kernel_inner_divisor() -> usize {
    10_000
}

impl Default for VerifySpec {
    fn default() -> Self {
        toml::from_str("").expect("verify defaults")
    }
}

/// Top-level run configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mixture: MixtureSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    pub predictor: PredictorSpec,
    pub corrector: CorrectorSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub smoothness: SmoothnessSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ConfigFile = toml::from_str(text)
            .map_err(|e| Error::invalid_config("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical emission: parsing the output and emitting again is a fixed
    /// point.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid_config("config", e.to_string()))
    }

    pub fn mixture(&self) -> Result<GaussianMixture> {
        let components = self
            .mixture
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let variance = match &c.variance {
                    VarianceSpec::Isotropic(v) => vec![*v; c.mean.len()],
                    VarianceSpec::PerAxis(vs) => {
                        if vs.len() != c.mean.len() {
                            return Err(Error::invalid_config(
                                format!("mixture.components[{i}].variance"),
                                "per-axis variance length must match the mean",
                            ));
                        }
                        vs.clone()
                    }
                };
                Ok(Component {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    variance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
            .map_err(|e| Error::invalid_config("mixture.components", e.to_string()))
    }

    fn perturbation(&self, dim: usize) -> Result<Perturbation> {
        let Some(oracle) = &self.oracle else {
            return Ok(Perturbation::None);
        };
        match oracle.kind.as_str() {
            "none" => Ok(Perturbation::None),
            "constant_bias" => Ok(Perturbation::ConstantBias {
                epsilon: oracle.epsilon,
                direction: Perturbation::random_direction(dim, oracle.direction_seed)?,
            }),
            "sinusoidal" => Ok(Perturbation::Sinusoidal {
                epsilon: oracle.epsilon,
                omega: oracle.omega,
                direction: Perturbation::random_direction(dim, oracle.direction_seed)?,
            }),
            other => Err(Error::invalid_config(
                "oracle.kind",
                format!("unknown kind `{other}` (none, constant_bias, sinusoidal)"),
            )),
        }
    }

    fn corrector_kind(&self) -> Result<CorrectorKind> {
        match self.corrector.kind.as_str() {
            "overdamped" => Ok(CorrectorKind::Overdamped),
            "underdamped" => Ok(CorrectorKind::Underdamped),
            other => Err(Error::invalid_config(
                "corrector.kind",
                format!("unknown kind `{other}` (overdamped, underdamped)"),
            )),
        }
    }

    fn budget(&self) -> Result<CorrectorBudget> {
        match self.corrector.budget.as_str() {
            "theory" => Ok(CorrectorBudget::Theory {
                multiplier: self.corrector.multiplier,
            }),
            "explicit" => {
                let n_steps = self.corrector.n_steps.ok_or_else(|| {
                    Error::invalid_config(
                        "corrector.n_steps",
                        "explicit budget requires n_steps",
                    )
                })?;
                Ok(CorrectorBudget::Explicit { n_steps })
            }
            other => Err(Error::invalid_config(
                "corrector.budget",
                format!("unknown budget `{other}` (theory, explicit)"),
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mixture.components.is_empty() {
            return Err(Error::invalid_config(
                "mixture.components",
                "at least one component required",
            ));
        }
        if !(self.predictor.horizon > 0.0) {
            return Err(Error::invalid_config(
                "predictor.horizon",
                "must be positive",
            ));
        }
        if !(self.predictor.h_pred > 0.0) {
            return Err(Error::invalid_config("predictor.h_pred", "must be positive"));
        }
        if let Some(delta) = self.predictor.delta {
            if !(delta > 0.0) {
                return Err(Error::invalid_config("predictor.delta", "must be positive"));
            }
        }
        if !(self.corrector.h_corr > 0.0) {
            return Err(Error::invalid_config("corrector.h_corr", "must be positive"));
        }
        if let Some(f) = self.corrector.friction {
            if !(f > 0.0) {
                return Err(Error::invalid_config("corrector.friction", "must be positive"));
            }
        }
        if !(self.corrector.velocity_init_std >= 0.0) {
            return Err(Error::invalid_config(
                "corrector.velocity_init_std",
                "must be nonnegative",
            ));
        }
        if let Some(oracle) = &self.oracle {
            if !(oracle.epsilon >= 0.0) {
                return Err(Error::invalid_config("oracle.epsilon", "must be nonnegative"));
            }
            if !(oracle.omega >= 0.0) {
                return Err(Error::invalid_config("oracle.omega", "must be nonnegative"));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.len() < 4 {
                return Err(Error::invalid_config(
                    "sweep.values",
                    format!("need at least 4 values, got {}", sweep.values.len()),
                ));
            }
        }
        // Referenced-type invariants (weights, variances, dimensions).
        self.mixture()?;
        Ok(())
    }

    /// Converts to resolved-ready sampler settings, applying a seed override.
    pub fn to_settings(&self, seed_override: Option<u64>) -> Result<RunSettings> {
        let mixture = self.mixture()?;
        let dim = mixture.dim();
        let perturbation = self.perturbation(dim)?;
        let kind = self.corrector_kind()?;
        let budget = self.budget()?;
        let mut settings = RunSettings::new(mixture, kind);
        settings.horizon = self.predictor.horizon;
        settings.h_pred = self.predictor.h_pred;
        settings.h_corr = self.corrector.h_corr;
        settings.budget = budget;
        settings.friction = self.corrector.friction;
        settings.velocity_init_std = self.corrector.velocity_init_std;
        settings.delta = self.predictor.delta;
        settings.epsilon_target = self.predictor.epsilon_target;
        settings.epoch_length = self.predictor.epoch_length;
        settings.ensemble_size = self.run.ensemble_size;
        settings.seed = seed_override.unwrap_or(self.run.seed);
        settings.checkpoints = self.run.checkpoints.clone();
        settings.perturbation = perturbation;
        settings.predictor_only = self.predictor.predictor_only;
        settings.smoothness_times = self.smoothness.times;
        settings.smoothness_probes = self.smoothness.probes;
        settings.metrics = MetricSettings {
            w2_reference: self.metrics.w2_reference,
            slices: self.metrics.slices,
            tv_bins: self.metrics.tv_bins,
        };
        settings.keep_snapshots = self.run.emit_ensembles;
        Ok(settings)
    }

    pub fn sweep_parameter(&self) -> Result<(SweepParameter, Vec<f64>, SweepMetric)> {
        let sweep = self.sweep.as_ref().ok_or_else(|| {
            Error::invalid_config("sweep", "sweep section required for the sweep command")
        })?;
        let parameter = SweepParameter::parse(&sweep.parameter)?;
        let metric = match sweep.metric.as_str() {
            "w2_vs_reference" => SweepMetric::W2VsReference {
                refine: sweep.refine,
            },
            "w2_vs_exact" => SweepMetric::W2VsExact {
                reference_size: sweep.reference_size,
            },
            "corrector_divergence" => SweepMetric::CorrectorDivergence,
            other => {
                return Err(Error::invalid_config(
                    "sweep.metric",
                    format!(
                        "unknown metric `{other}` (w2_vs_reference, w2_vs_exact, corrector_divergence)"
                    ),
                ))
            }
        };
        Ok((parameter, sweep.values.clone(), metric))
    }
}

/// Fixed unit direction helper shared by presets and tests.
pub fn axis_direction(dim: usize, axis: usize) -> Result<StateVec> {
    let mut v = vec![0.0; dim];
    if axis >= dim {
        return Err(Error::InvalidArgument("axis out of range".into()));
    }
    v[axis] = 1.0;
    StateVec::new(v)
}
