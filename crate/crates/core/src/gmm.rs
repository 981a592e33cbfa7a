//! Gaussian mixtures with closed-form scores, densities, moments, and
//! Ornstein-Uhlenbeck marginals.
//!
//! Components carry per-axis (diagonal) variances, which keeps every OU
//! marginal a mixture of the same shape: under `dx = -x dt + sqrt(2) dB`,
//! a component `(w, mu, var)` evolves to `(w, e^{-t} mu, e^{-2t} var + 1 - e^{-2t})`
//! per axis.

use crate::error::{Error, Result};
use crate::numerics::{RngStream, StateVec};

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// One mixture component with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-axis variances, strictly positive.
    pub variance: Vec<f64>,
}

impl Component {
    /// Isotropic component: one variance shared by all axes.
    pub fn isotropic(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        Component {
            weight,
            mean,
            variance: vec![variance; d],
        }
    }
}

/// A Gaussian mixture over `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
    dim: usize,
    /// Cached `ln w_i - 0.5 * sum_a ln(2 pi var_ia)` per component.
    log_norm: Vec<f64>,
}

/// Smoothness summary used by step-size schedules: a Lipschitz bound for the
/// score (clamped to `>= 1`) and the second moment `m2 = sqrt(E ||x||^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessInfo {
    pub lipschitz: f64,
    pub second_moment: f64,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be >= 1".into()));
        }
        let mut weight_sum = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: c.mean.len().max(c.variance.len()),
                    context: "mixture component",
                });
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "component {i}: weight must be positive and finite"
                )));
            }
            if !c.mean.iter().all(|m| m.is_finite()) {
                return Err(Error::non_finite(format!("component {i} mean")));
            }
            if !c.variance.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "component {i}: variances must be strictly positive"
                )));
            }
            weight_sum += c.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {weight_sum}, expected 1 within 1e-12"
            )));
        }
        let log_norm = components
            .iter()
            .map(|c| {
                c.weight.ln()
                    - 0.5 * c.variance.iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
            })
            .collect();
        Ok(GaussianMixture {
            components,
            dim,
            log_norm,
        })
    }

    /// The standard Gaussian `N(0, I_d)`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(vec![Component::isotropic(1.0, vec![0.0; d], 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Marginal of the OU process `dx = -x dt + sqrt(2) dB` at time `t >= 0`
    /// started from this mixture.
    pub fn ou_marginal(&self, t: f64) -> Result<GaussianMixture> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ou_marginal requires t >= 0, got {t}"
            )));
        }
        let decay = (-t).exp();
        let var_decay = (-2.0 * t).exp();
        let injected = -(-2.0 * t).exp_m1(); // 1 - e^{-2t}, exact at t = 0
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: c.mean.iter().map(|m| decay * m).collect(),
                variance: c
                    .variance
                    .iter()
                    .map(|v| var_decay * v + injected)
                    .collect(),
            })
            .collect();
        GaussianMixture::new(components)
    }

    fn component_log_density(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.components[i];
        let mut quad = 0.0;
        for a in 0..self.dim {
            let r = x[a] - c.mean[a];
            quad += r * r / c.variance[a];
        }
        self.log_norm[i] - 0.5 * quad
    }

    /// `ln q(x)` via log-sum-exp with max subtraction.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut lmax = f64::NEG_INFINITY;
        for i in 0..self.components.len() {
            lmax = lmax.max(self.component_log_density(i, x));
        }
        let mut s = 0.0;
        for i in 0..self.components.len() {
            s += (self.component_log_density(i, x) - lmax).exp();
        }
        lmax + s.ln()
    }

    /// Writes `grad ln q(x)` into `out`; returns `ln q(x)` as a by-product.
    ///
    /// Runs a single pass with an online log-sum-exp so separated modes stay
    /// stable without a scratch allocation.
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let d = self.dim;
        if self.components.len() == 1 {
            let c = &self.components[0];
            let mut quad = 0.0;
            for a in 0..d {
                let r = x[a] - c.mean[a];
                out[a] = -r / c.variance[a];
                quad += r * r / c.variance[a];
            }
            return self.log_norm[0] - 0.5 * quad;
        }
        let mut m = f64::NEG_INFINITY;
        let mut s = 0.0;
        out.fill(0.0);
        for (i, c) in self.components.iter().enumerate() {
            let mut quad = 0.0;
            for a in 0..d {
                let r = x[a] - c.mean[a];
                quad += r * r / c.variance[a];
            }
            let l = self.log_norm[i] - 0.5 * quad;
            let w = if l > m {
                let rescale = if m.is_finite() { (m - l).exp() } else { 0.0 };
                s *= rescale;
                for v in out.iter_mut() {
                    *v *= rescale;
                }
                m = l;
                1.0
            } else {
                (l - m).exp()
            };
            s += w;
            for a in 0..d {
                out[a] += w * (c.mean[a] - x[a]) / c.variance[a];
            }
        }
        for v in out.iter_mut() {
            *v /= s;
        }
        m + s.ln()
    }

    /// `grad ln q(x)`.
    pub fn score(&self, x: &StateVec) -> Result<StateVec> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: self.dim,
                context: "score",
            });
        }
        let mut out = vec![0.0; self.dim];
        self.score_into(x.as_slice(), &mut out);
        Ok(StateVec::from_raw(out))
    }

    /// Posterior responsibilities `r_i(x)`, log-sum-exp stabilized.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut lmax = f64::NEG_INFINITY;
        let logs: Vec<f64> = (0..self.components.len())
            .map(|i| {
                let l = self.component_log_density(i, x);
                lmax = lmax.max(l);
                l
            })
            .collect();
        let mut r: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
        let s: f64 = r.iter().sum();
        for v in r.iter_mut() {
            *v /= s;
        }
        r
    }

    /// Hessian `grad^2 ln q(x)`, row-major `d x d`:
    /// `sum_i r_i (g_i g_i^T - Sigma_i^{-1}) - g g^T` with `g_i = Sigma_i^{-1}(mu_i - x)`.
    pub fn hessian_log_density(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let r = self.responsibilities(x);
        let mut h = vec![0.0; d * d];
        let mut g = vec![0.0; d];
        let mut gi = vec![0.0; d];
        for (i, c) in self.components.iter().enumerate() {
            for a in 0..d {
                gi[a] = (c.mean[a] - x[a]) / c.variance[a];
            }
            for a in 0..d {
                g[a] += r[i] * gi[a];
                h[a * d + a] -= r[i] / c.variance[a];
                for b in 0..d {
                    h[a * d + b] += r[i] * gi[a] * gi[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                h[a * d + b] -= g[a] * g[b];
            }
        }
        h
    }

    /// Draws one sample: component by weight, then the Gaussian.
    pub fn sample(&self, rng: &mut RngStream) -> StateVec {
        let u = rng.uniform();
        let mut cum = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            cum += c.weight;
            if u < cum {
                idx = i;
                break;
            }
        }
        let c = &self.components[idx];
        let mut out = vec![0.0; self.dim];
        rng.fill_standard_normal(&mut out);
        for a in 0..self.dim {
            out[a] = c.mean[a] + c.variance[a].sqrt() * out[a];
        }
        StateVec::from_raw(out)
    }

    /// Exact `m2^2 = sum_i w_i (||mu_i||^2 + sum_a var_ia)`.
    pub fn second_moment_sq(&self) -> f64 {
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * (c.mean.iter().map(|m| m * m).sum::<f64>()
                        + c.variance.iter().sum::<f64>())
            })
            .sum()
    }

    /// Empirical Lipschitz bound for the score plus the exact second moment.
    ///
    /// For each `t` in the grid the Hessian operator norm is maximized over
    /// `probes` points sampled from the marginal, plus the component means
    /// and their pairwise midpoints. The result is clamped to `>= 1`.
    pub fn smoothness(&self, t_grid: &[f64], probes: usize, seed: u64) -> Result<SmoothnessInfo> {
        if t_grid.is_empty() {
            return Err(Error::InvalidArgument("smoothness requires a nonempty t grid".into()));
        }
        let mut lipschitz: f64 = 1.0;
        for (ti, &t) in t_grid.iter().enumerate() {
            let qt = self.ou_marginal(t)?;
            let mut points: Vec<Vec<f64>> = Vec::new();
            for c in qt.components() {
                points.push(c.mean.clone());
            }
            for i in 0..qt.components().len() {
                for j in (i + 1)..qt.components().len() {
                    let mid: Vec<f64> = qt.components()[i]
                        .mean
                        .iter()
                        .zip(&qt.components()[j].mean)
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    points.push(mid);
                }
            }
            for k in 0..probes {
                let mut rng = RngStream::new(
                    seed,
                    crate::numerics::StreamId::new(
                        k as u64,
                        crate::numerics::Phase::HessianProbe,
                        ti as u64,
                    ),
                );
                points.push(qt.sample(&mut rng).into_vec());
            }
            for p in &points {
                let mut h = qt.hessian_log_density(p);
                let norm = sym_op_norm(&mut h, self.dim);
                lipschitz = lipschitz.max(norm);
            }
        }
        Ok(SmoothnessInfo {
            lipschitz,
            second_moment: self.second_moment_sq().sqrt(),
        })
    }
}

/// Operator norm of a symmetric `d x d` matrix (row-major) by cyclic Jacobi.
/// Destroys `a`.
pub fn sym_op_norm(a: &mut [f64], d: usize) -> f64 {
    assert_eq!(a.len(), d * d);
    if d == 1 {
        return a[0].abs();
    }
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return 0.0;
    }
    let tol = 1e-14 * frob;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max)
}
