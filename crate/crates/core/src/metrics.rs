//! Distance estimators between ensembles and analytic references, plus the
//! log-log slope regression used by rate sweeps.

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::numerics::{Phase, RngStream, StateVec, StreamId};

/// Largest ensemble size accepted by the exact assignment solver.
pub const EXACT_W2_CAP: usize = 4096;

fn check_ensemble_dims(a: &[StateVec], b: &[StateVec], context: &'static str) -> Result<usize> {
    let d = a
        .first()
        .or_else(|| b.first())
        .map(StateVec::dim)
        .ok_or_else(|| Error::InvalidArgument(format!("{context}: empty ensembles")))?;
    for p in a.iter().chain(b) {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                left: p.dim(),
                right: d,
                context,
            });
        }
    }
    Ok(d)
}

/// Minimal total cost of a balanced assignment on an `n x n` cost matrix
/// (row-major), by the O(n^3) shortest-augmenting-path method with potentials.
fn assignment_cost(cost: &[f64], n: usize) -> f64 {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned = vec![0usize; n + 1]; // assigned[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n)
        .map(|j| cost[(assigned[j] - 1) * n + (j - 1)])
        .sum()
}

/// Exact empirical W2: optimal assignment on squared Euclidean cost, then
/// the root of the mean matched cost. Requires equal sizes `<= 4096`.
pub fn w2_exact(a: &[StateVec], b: &[StateVec]) -> Result<f64> {
    check_ensemble_dims(a, b, "w2_exact")?;
    let n = a.len();
    if n != b.len() {
        return Err(Error::DimensionMismatch {
            left: n,
            right: b.len(),
            context: "w2_exact sizes",
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("w2_exact: empty ensembles".into()));
    }
    if n > EXACT_W2_CAP {
        return Err(Error::InvalidArgument(format!(
            "w2_exact capped at {EXACT_W2_CAP} points, got {n}"
        )));
    }
    let mut cost = vec![0.0f64; n * n];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            cost[i * n + j] = x
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
        }
    }
    Ok((assignment_cost(&cost, n) / n as f64).sqrt())
}

/// Sliced W2 estimate with standard error.
#[derive(Clone, Copy, Debug)]
pub struct SlicedW2 {
    pub estimate: f64,
    pub stderr: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64) as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Sliced W2: averages squared 1-d sorted-coupling transport costs over `k`
/// random directions and rescales by `sqrt(d)`, which is exact for isotropic
/// Gaussian pairs. Sizes may differ; quantiles align the finer grid.
pub fn w2_sliced(a: &[StateVec], b: &[StateVec], k: usize, seed: u64) -> Result<SlicedW2> {
    let d = check_ensemble_dims(a, b, "w2_sliced")?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("w2_sliced: empty ensembles".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("w2_sliced: need k >= 1 slices".into()));
    }
    let mut per_slice = Vec::with_capacity(k);
    let mut proj_a = vec![0.0; a.len()];
    let mut proj_b = vec![0.0; b.len()];
    for slice in 0..k {
        let mut rng = RngStream::new(seed, StreamId::new(0, Phase::SliceDirection, slice as u64));
        let mut dir = vec![0.0; d];
        rng.fill_standard_normal(&mut dir);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in dir.iter_mut() {
            *x /= norm;
        }
        let project = |points: &[StateVec], out: &mut [f64]| {
            for (p, o) in points.iter().zip(out.iter_mut()) {
                *o = p.as_slice().iter().zip(&dir).map(|(x, u)| x * u).sum();
            }
        };
        project(a, &mut proj_a);
        project(b, &mut proj_b);
        proj_a.sort_unstable_by(f64::total_cmp);
        proj_b.sort_unstable_by(f64::total_cmp);
        let cost = if a.len() == b.len() {
            proj_a
                .iter()
                .zip(&proj_b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / a.len() as f64
        } else {
            let m = a.len().max(b.len());
            (0..m)
                .map(|i| {
                    let q = (i as f64 + 0.5) / m as f64;
                    let diff = quantile(&proj_a, q) - quantile(&proj_b, q);
                    diff * diff
                })
                .sum::<f64>()
                / m as f64
        };
        per_slice.push(cost);
    }
    let mean = per_slice.iter().sum::<f64>() / k as f64;
    let var = per_slice
        .iter()
        .map(|c| (c - mean) * (c - mean))
        .sum::<f64>()
        / k as f64;
    let se_mean = (var / k as f64).sqrt();
    let estimate = (d as f64 * mean).sqrt();
    // Delta method through sqrt(d * mean).
    let stderr = if estimate > 0.0 {
        d as f64 * se_mean / (2.0 * estimate)
    } else {
        0.0
    };
    Ok(SlicedW2 { estimate, stderr })
}

/// Histogram grid for TV estimation, `d <= 3`.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || d > 3 {
            return Err(Error::InvalidArgument(
                "TV histogram supports 1 <= d <= 3".into(),
            ));
        }
        if hi.len() != d || bins.len() != d {
            return Err(Error::InvalidArgument("grid spec lengths differ".into()));
        }
        for a in 0..d {
            if !(hi[a] > lo[a]) || bins[a] == 0 {
                return Err(Error::InvalidArgument("degenerate grid axis".into()));
            }
        }
        Ok(GridSpec { lo, hi, bins })
    }

    /// Covers the mixture's mass: component means plus 6 standard deviations.
    pub fn covering(mixture: &GaussianMixture, bins_per_axis: usize) -> Result<Self> {
        let d = mixture.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in mixture.components() {
            for a in 0..d {
                let sd = c.variance[a].sqrt();
                lo[a] = lo[a].min(c.mean[a] - 6.0 * sd);
                hi[a] = hi[a].max(c.mean[a] + 6.0 * sd);
            }
        }
        GridSpec::new(lo, hi, vec![bins_per_axis; d])
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    /// Flat cell index, or None when outside the grid.
    fn cell(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for a in 0..self.dim() {
            if x[a] < self.lo[a] || x[a] >= self.hi[a] {
                return None;
            }
            let width = (self.hi[a] - self.lo[a]) / self.bins[a] as f64;
            let b = (((x[a] - self.lo[a]) / width) as usize).min(self.bins[a] - 1);
            idx = idx * self.bins[a] + b;
        }
        Some(idx)
    }
}

fn histogram(points: &[StateVec], grid: &GridSpec) -> (Vec<f64>, f64) {
    let mut cells = vec![0.0; grid.n_cells()];
    let mut outside = 0.0;
    let w = 1.0 / points.len() as f64;
    for p in points {
        match grid.cell(p.as_slice()) {
            Some(i) => cells[i] += w,
            None => outside += w,
        }
    }
    (cells, outside)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Per-cell mass of the mixture: product of per-axis Gaussian CDF increments.
fn mixture_histogram(mixture: &GaussianMixture, grid: &GridSpec) -> (Vec<f64>, f64) {
    let d = grid.dim();
    let mut cells = vec![0.0; grid.n_cells()];
    let mut inside_total = 0.0;
    for c in mixture.components() {
        // Per-axis CDF increments at the bin edges.
        let mut axis_masses: Vec<Vec<f64>> = Vec::with_capacity(d);
        for a in 0..d {
            let sd = c.variance[a].sqrt();
            let width = (grid.hi[a] - grid.lo[a]) / grid.bins[a] as f64;
            let mut masses = Vec::with_capacity(grid.bins[a]);
            let mut prev = normal_cdf((grid.lo[a] - c.mean[a]) / sd);
            for b in 0..grid.bins[a] {
                let edge = grid.lo[a] + (b + 1) as f64 * width;
                let cur = normal_cdf((edge - c.mean[a]) / sd);
                masses.push((cur - prev).max(0.0));
                prev = cur;
            }
            axis_masses.push(masses);
        }
        for (i, cell) in cells.iter_mut().enumerate() {
            let mut rest = i;
            let mut mass = c.weight;
            for a in (0..d).rev() {
                let b = rest % grid.bins[a];
                rest /= grid.bins[a];
                mass *= axis_masses[a][b];
            }
            *cell += mass;
            inside_total += mass;
        }
    }
    (cells, 1.0 - inside_total)
}

/// Reference distribution for [`tv_histogram`].
pub enum TvReference<'a> {
    Ensemble(&'a [StateVec]),
    Mixture(&'a GaussianMixture),
}

/// Half-L1 distance between normalized histograms on a shared grid, with an
/// implicit outside cell so the result stays in `[0, 1]`.
pub fn tv_histogram(a: &[StateVec], b: TvReference<'_>, grid: &GridSpec) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("tv_histogram: empty ensemble".into()));
    }
    let d = a[0].dim();
    if d != grid.dim() {
        return Err(Error::DimensionMismatch {
            left: d,
            right: grid.dim(),
            context: "tv_histogram",
        });
    }
    let (pa, out_a) = histogram(a, grid);
    let (pb, out_b) = match b {
        TvReference::Ensemble(points) => {
            if points.is_empty() {
                return Err(Error::InvalidArgument("tv_histogram: empty reference".into()));
            }
            check_ensemble_dims(a, points, "tv_histogram")?;
            histogram(points, grid)
        }
        TvReference::Mixture(m) => {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    left: m.dim(),
                    right: d,
                    context: "tv_histogram mixture",
                });
            }
            mixture_histogram(m, grid)
        }
    };
    let mut tv = (out_a - out_b).abs();
    for (x, y) in pa.iter().zip(&pb) {
        tv += (x - y).abs();
    }
    Ok((0.5 * tv).clamp(0.0, 1.0))
}

/// Fraction of particles whose nearest component mean is component `i`.
pub fn mode_weights(ensemble: &[StateVec], mixture: &GaussianMixture) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("mode_weights: empty ensemble".into()));
    }
    let d = mixture.dim();
    let mut counts = vec![0usize; mixture.components().len()];
    for p in ensemble {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                left: p.dim(),
                right: d,
                context: "mode_weights",
            });
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, c) in mixture.components().iter().enumerate() {
            let dist: f64 = c
                .mean
                .iter()
                .zip(p.as_slice())
                .map(|(m, x)| (m - x) * (m - x))
                .sum();
            if dist < best_d {
                best_d = dist;
                best = i;
            }
        }
        counts[best] += 1;
    }
    Ok(counts
        .iter()
        .map(|&c| c as f64 / ensemble.len() as f64)
        .collect())
}

/// Ordinary least squares on `(ln parameter, ln error)`.
pub fn slope_regression(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "slope regression needs >= 4 points, got {}",
            points.len()
        )));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| {
            if x > 0.0 && y > 0.0 {
                Ok((x.ln(), y.ln()))
            } else {
                Err(Error::InvalidArgument(format!(
                    "slope regression needs positive values, got ({x}, {y})"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument(
            "slope regression needs distinct parameter values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Component;
    use crate::numerics::gaussian_vector;
    use approx::assert_relative_eq;

    fn points(vals: &[&[f64]]) -> Vec<StateVec> {
        vals.iter()
            .map(|v| StateVec::new(v.to_vec()).unwrap())
            .collect()
    }

    fn gaussian_cloud(n: usize, d: usize, mean: f64, seed_step: u64) -> Vec<StateVec> {
        (0..n)
            .map(|k| {
                let mut rng = RngStream::new(500, StreamId::new(k as u64, Phase::Test, seed_step));
                let mut x = gaussian_vector(&mut rng, d).unwrap();
                for v in x.as_mut_slice() {
                    *v += mean;
                }
                x
            })
            .collect()
    }

    #[test]
    fn w2_exact_basics() {
        let a = points(&[&[0.0], &[1.0]]);
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
        let b = points(&[&[2.0]]);
        let single = points(&[&[0.0]]);
        assert_relative_eq!(w2_exact(&single, &b).unwrap(), 2.0, epsilon = 1e-14);
        assert!(w2_exact(&a, &b).is_err());
    }

    #[test]
    fn w2_exact_finds_optimal_matching() {
        // Crossing pairs: identity matching costs 8, optimal costs 0+4.
        let a = points(&[&[0.0], &[2.0]]);
        let b = points(&[&[2.0], &[0.0]]);
        assert_relative_eq!(w2_exact(&a, &b).unwrap(), 0.0, epsilon = 1e-14);
        let c = points(&[&[1.0], &[3.0]]);
        // Optimal assignment: 0->1, 2->3 (cost 1 each).
        assert_relative_eq!(w2_exact(&a, &c).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn w2_exact_symmetry_and_triangle_inequality() {
        let a = gaussian_cloud(48, 3, 0.0, 10);
        let b = gaussian_cloud(48, 3, 0.7, 11);
        let c = gaussian_cloud(48, 3, -0.4, 12);
        let ab = w2_exact(&a, &b).unwrap();
        let ba = w2_exact(&b, &a).unwrap();
        assert_relative_eq!(ab, ba, max_relative = 1e-12);
        let ac = w2_exact(&a, &c).unwrap();
        let cb = w2_exact(&c, &b).unwrap();
        assert!(ab <= ac + cb + 1e-12);
    }

    /// Closed-form oracle: W2 between N(0,1) and N(1,1) is 1.
    #[test]
    fn w2_sliced_translation_oracle() {
        let a = gaussian_cloud(10_000, 1, 0.0, 13);
        let b = gaussian_cloud(10_000, 1, 1.0, 14);
        let est = w2_sliced(&a, &b, 64, 9).unwrap();
        assert!(
            (est.estimate - 1.0).abs() < 0.05,
            "sliced estimate {}",
            est.estimate
        );
    }

    #[test]
    fn w2_modes_agree_on_isotropic_gaussian_pairs() {
        let n = 2048;
        let a = gaussian_cloud(n, 2, 0.0, 15);
        let b = gaussian_cloud(n, 2, 1.0, 16);
        let exact = w2_exact(&a, &b).unwrap();
        let sliced = w2_sliced(&a, &b, 256, 10).unwrap().estimate;
        assert!(
            (exact - sliced).abs() / exact < 0.10,
            "exact {exact} vs sliced {sliced}"
        );
    }

    #[test]
    fn tv_histogram_extremes() {
        let grid = GridSpec::new(vec![-1.0], vec![1.0], vec![10]).unwrap();
        let a = points(&[&[-0.5], &[0.5], &[0.1]]);
        assert_eq!(tv_histogram(&a, TvReference::Ensemble(&a), &grid).unwrap(), 0.0);
        let b = points(&[&[-0.55], &[0.95]]);
        let disjoint_grid = GridSpec::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        let left = points(&[&[0.1], &[0.2]]);
        let right = points(&[&[0.8], &[0.9]]);
        assert_relative_eq!(
            tv_histogram(&left, TvReference::Ensemble(&right), &disjoint_grid).unwrap(),
            1.0
        );
        let _ = b;
    }

    /// Expected half-L1 noise for 1e5 samples against the analytic density.
    #[test]
    fn tv_histogram_against_analytic_gaussian() {
        let q = GaussianMixture::standard(1).unwrap();
        let samples: Vec<StateVec> = (0..100_000)
            .map(|k| {
                let mut rng = RngStream::new(900, StreamId::new(k as u64, Phase::Test, 17));
                q.sample(&mut rng)
            })
            .collect();
        let grid = GridSpec::new(vec![-5.0], vec![5.0], vec![100]).unwrap();
        let tv = tv_histogram(&samples, TvReference::Mixture(&q), &grid).unwrap();
        assert!(tv <= 0.02, "tv {tv}");
    }

    #[test]
    fn tv_histogram_bin_refinement_does_not_shrink() {
        let q = GaussianMixture::new(vec![
            Component::isotropic(0.5, vec![-1.0], 0.3),
            Component::isotropic(0.5, vec![1.0], 0.3),
        ])
        .unwrap();
        // Offset samples so the TV is genuinely nonzero.
        let samples: Vec<StateVec> = (0..50_000)
            .map(|k| {
                let mut rng = RngStream::new(901, StreamId::new(k as u64, Phase::Test, 18));
                let mut x = q.sample(&mut rng);
                x.as_mut_slice()[0] += 0.25;
                x
            })
            .collect();
        let coarse_grid = GridSpec::new(vec![-6.0], vec![6.0], vec![40]).unwrap();
        let fine_grid = GridSpec::new(vec![-6.0], vec![6.0], vec![80]).unwrap();
        let coarse = tv_histogram(&samples, TvReference::Mixture(&q), &coarse_grid).unwrap();
        let fine = tv_histogram(&samples, TvReference::Mixture(&q), &fine_grid).unwrap();
        let noise = (80.0f64 / 50_000.0).sqrt();
        assert!(fine >= coarse - noise, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn tv_histogram_rejects_high_dimension() {
        assert!(GridSpec::new(vec![0.0; 4], vec![1.0; 4], vec![4; 4]).is_err());
    }

    #[test]
    fn mode_weights_cases() {
        let q = GaussianMixture::standard(2).unwrap();
        let e = gaussian_cloud(50, 2, 0.0, 19);
        assert_eq!(mode_weights(&e, &q).unwrap(), vec![1.0]);

        let two = GaussianMixture::new(vec![
            Component::isotropic(0.5, vec![-3.0, 0.0], 1.0),
            Component::isotropic(0.5, vec![3.0, 0.0], 1.0),
        ])
        .unwrap();
        let at_mean = points(&[&[3.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(mode_weights(&at_mean, &two).unwrap(), vec![0.0, 1.0]);
        assert!(mode_weights(&[], &two).is_err());
    }

    /// Multinomial 3-sigma oracle for exact samples of a weighted mixture.
    #[test]
    fn mode_weights_match_mixture_weights() {
        let q = GaussianMixture::new(vec![
            Component::isotropic(0.7, vec![-4.0], 0.25),
            Component::isotropic(0.3, vec![4.0], 0.25),
        ])
        .unwrap();
        let n = 20_000usize;
        let samples: Vec<StateVec> = (0..n)
            .map(|k| {
                let mut rng = RngStream::new(902, StreamId::new(k as u64, Phase::Test, 20));
                q.sample(&mut rng)
            })
            .collect();
        let freqs = mode_weights(&samples, &q).unwrap();
        for (f, c) in freqs.iter().zip(q.components()) {
            let sigma = (c.weight * (1.0 - c.weight) / n as f64).sqrt();
            assert!((f - c.weight).abs() <= 3.0 * sigma, "freq {f} vs {}", c.weight);
        }
    }

    #[test]
    fn slope_regression_recovers_exponents() {
        let line: Vec<(f64, f64)> = [0.02, 0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| (h, 3.0 * h))
            .collect();
        let (slope, _) = slope_regression(&line).unwrap();
        assert_relative_eq!(slope, 1.0, epsilon = 1e-12);

        let root: Vec<(f64, f64)> = [0.02f64, 0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| (h, 0.5 * h.sqrt()))
            .collect();
        let (slope, _) = slope_regression(&root).unwrap();
        assert_relative_eq!(slope, 0.5, epsilon = 1e-12);
    }

    /// OLS noise bound: 5% multiplicative noise on 6 points keeps the fitted
    /// slope within 0.1.
    #[test]
    fn slope_regression_with_noise() {
        let mut rng = RngStream::new(903, StreamId::new(0, Phase::Test, 21));
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let h = 0.1 / (1 << i) as f64;
                let noise = 1.0 + 0.05 * rng.standard_normal();
                (h, 2.0 * h * noise)
            })
            .collect();
        let (slope, stderr) = slope_regression(&pts).unwrap();
        assert!((slope - 1.0).abs() < 0.1, "slope {slope} (stderr {stderr})");
    }

    #[test]
    fn slope_regression_input_validation() {
        assert!(slope_regression(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(slope_regression(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (-1.0, 4.0)]).is_err());
        assert!(slope_regression(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]).is_err());
    }
}
