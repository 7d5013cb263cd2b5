//! One-dimensional Gaussian mixtures: kernel-density mode counting,
//! expectation-maximization fitting and the per-mode responsibilities used by
//! mode-specific normalization.
//!
//! The mixture fit runs EM for every mode count up to `max_modes`, prunes
//! components whose weight falls under [`WEIGHT_FLOOR`], and keeps the
//! candidate with the lowest BIC. Columns with fewer modes than allowed end up
//! with a few high-weight components instead of many near-empty ones.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{self, exp, ln, log_sum_exp, normal_ln_pdf, normal_pdf, sqrt};
use crate::seeded_rng;

/// Components lighter than this are dropped after EM.
pub const WEIGHT_FLOOR: f64 = 0.005;
/// Default upper bound on mixture components.
pub const DEFAULT_MAX_MODES: usize = 10;
pub const MAX_ITERATIONS: usize = 300;
/// Convergence threshold on the mean per-sample log-likelihood.
pub const TOLERANCE: f64 = 1e-6;
/// Grid resolution of the kernel density scan.
pub const KDE_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GmmError {
    #[error("no values to fit")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("bandwidth must be positive and finite")]
    Bandwidth,
    #[error("invalid mixture: {0}")]
    Invalid(&'static str),
    #[error("max_modes must be at least 1")]
    NoModes,
}

/// A fitted one-dimensional Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self, GmmError> {
        if weights.is_empty() {
            return Err(GmmError::Invalid("no components"));
        }
        if weights.len() != means.len() || weights.len() != stds.len() {
            return Err(GmmError::Invalid("parameter lengths differ"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GmmError::Invalid("weights must be non-negative"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GmmError::Invalid("weights must sum to one"));
        }
        if means.iter().any(|m| !m.is_finite()) || stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(GmmError::Invalid("means finite and stds positive"));
        }
        Ok(GmmModel { weights, means, stds })
    }

    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Mixture density `Σ w_k N(x; μ_k, σ_k)`.
    pub fn density(&self, x: f64) -> f64 {
        self.weighted_densities(x).iter().sum()
    }

    /// Per-component weighted densities `ρ_k = w_k N(x; μ_k, σ_k)`.
    pub fn weighted_densities(&self, x: f64) -> Vec<f64> {
        (0..self.modes())
            .map(|k| self.weights[k] * normal_pdf(x, self.means[k], self.stds[k]))
            .collect()
    }

    /// Responsibilities `ρ_k / Σ_j ρ_j`. When every `ρ_k` underflows, the
    /// component nearest in standardized distance takes all the mass.
    pub fn mode_weights(&self, x: f64) -> Vec<f64> {
        let rho = self.weighted_densities(x);
        let total: f64 = rho.iter().sum();
        if total > 0.0 && total.is_finite() {
            return rho.into_iter().map(|r| r / total).collect();
        }
        let mut out = vec![0.0; self.modes()];
        out[self.nearest_mode(x)] = 1.0;
        out
    }

    /// Mode with the highest responsibility, lowest index on ties.
    pub fn assign(&self, x: f64) -> usize {
        math::argmax(&self.mode_weights(x))
    }

    fn nearest_mode(&self, x: f64) -> usize {
        let z: Vec<f64> = (0..self.modes()).map(|k| -((x - self.means[k]) / self.stds[k]).abs()).collect();
        math::argmax(&z)
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.modes()];
        values
            .iter()
            .map(|&x| {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = ln(self.weights[k]) + normal_ln_pdf(x, self.means[k], self.stds[k]);
                }
                log_sum_exp(&buf)
            })
            .sum()
    }
}

/// Free-function form of [`GmmModel::density`].
pub fn gmm_density(model: &GmmModel, x: f64) -> f64 {
    model.density(x)
}

/// Free-function form of [`GmmModel::mode_weights`].
pub fn mode_weights(model: &GmmModel, x: f64) -> Vec<f64> {
    model.mode_weights(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GmmWarning {
    /// Fewer distinct values than requested modes; the cap was lowered.
    ReducedModes { requested: usize, used: usize },
    /// Every value is identical; a single floored component was returned.
    Degenerate,
}

/// One EM run for a fixed starting component count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmCandidate {
    pub initial_modes: usize,
    pub surviving_modes: usize,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Total log-likelihood before each M-step; non-decreasing.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Local maxima of the Silverman-bandwidth KDE, kept for diagnostics.
    pub kde_modes: usize,
    pub candidates: Vec<EmCandidate>,
    /// Index into `candidates` of the selected run.
    pub selected: usize,
    pub warnings: Vec<GmmWarning>,
}

impl GmmFit {
    pub fn selected_candidate(&self) -> &EmCandidate {
        &self.candidates[self.selected]
    }
}

/// Smallest component standard deviation allowed for data spanning
/// `[min, max]`.
pub fn sigma_floor(min: f64, max: f64) -> f64 {
    let range = max - min;
    if range > 0.0 {
        1e-6 * range
    } else {
        1e-6 * min.abs().max(1.0)
    }
}

/// Silverman's rule-of-thumb bandwidth `0.9 min(σ, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sd = math::std_dev(values);
    let sorted = math::sorted(values);
    let iqr = math::quantile_sorted(&sorted, 0.75) - math::quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * math::powf(n, -0.2)
}

fn check_finite(values: &[f64]) -> Result<(), GmmError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(GmmError::NonFinite(i)),
        None => Ok(()),
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Counts local maxima of the Gaussian-kernel density on a
/// [`KDE_GRID`]-point grid spanning `[min, max]`.
pub fn estimate_mode_count(values: &[f64], bandwidth: f64) -> Result<usize, GmmError> {
    if values.is_empty() {
        return Err(GmmError::Empty);
    }
    check_finite(values)?;
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(GmmError::Bandwidth);
    }
    let (lo, hi) = min_max(values);
    if lo == hi {
        return Ok(1);
    }
    let step = (hi - lo) / (KDE_GRID - 1) as f64;
    let inv = 1.0 / bandwidth;
    let density: Vec<f64> = (0..KDE_GRID)
        .map(|i| {
            let g = lo + step * i as f64;
            values.iter().map(|&v| {
                let z = (g - v) * inv;
                exp(-0.5 * z * z)
            }).sum()
        })
        .collect();
    let n = density.len();
    let count = (0..n)
        .filter(|&i| {
            let rises = i == 0 || density[i] > density[i - 1];
            let falls = i == n - 1 || density[i] >= density[i + 1];
            rises && falls
        })
        .count();
    Ok(count.max(1))
}

/// Fits a mixture with at most `max_modes` components.
///
/// Deterministic in `(values, max_modes, seed)`.
pub fn fit_gmm(values: &[f64], max_modes: usize, seed: u64) -> Result<GmmFit, GmmError> {
    if values.is_empty() {
        return Err(GmmError::Empty);
    }
    if max_modes == 0 {
        return Err(GmmError::NoModes);
    }
    check_finite(values)?;
    let (lo, hi) = min_max(values);
    let floor = sigma_floor(lo, hi);
    let mut warnings = Vec::new();

    if lo == hi {
        warnings.push(GmmWarning::Degenerate);
        let model = GmmModel { weights: vec![1.0], means: vec![lo], stds: vec![floor] };
        let ll = model.log_likelihood(values);
        let candidate = EmCandidate {
            initial_modes: 1,
            surviving_modes: 1,
            bic: -2.0 * ll,
            iterations: 0,
            converged: true,
            trace: vec![ll],
        };
        return Ok(GmmFit { model, kde_modes: 1, candidates: vec![candidate], selected: 0, warnings });
    }

    let distinct = count_distinct(values);
    let cap = max_modes.min(distinct);
    if cap < max_modes {
        warnings.push(GmmWarning::ReducedModes { requested: max_modes, used: cap });
    }

    let n = values.len() as f64;
    let mut candidates = Vec::new();
    let mut models = Vec::new();
    let mut best = 0usize;
    let mut worse_in_a_row = 0;
    for m in 1..=cap {
        let mut rng = seeded_rng(seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let init = kmeans_pp_init(values, m, floor, &mut rng);
        let (model, trace, iterations, converged) = run_em(values, init, floor);
        let pruned = prune(model);
        let ll = pruned.log_likelihood(values);
        let params = (3 * pruned.modes() - 1) as f64;
        let bic = -2.0 * ll + params * ln(n);
        candidates.push(EmCandidate {
            initial_modes: m,
            surviving_modes: pruned.modes(),
            bic,
            iterations,
            converged,
            trace,
        });
        models.push(pruned);
        let idx = candidates.len() - 1;
        if bic < candidates[best].bic {
            best = idx;
            worse_in_a_row = 0;
        } else if idx > 0 {
            worse_in_a_row += 1;
            if worse_in_a_row >= 2 {
                break;
            }
        }
    }

    let bandwidth = silverman_bandwidth(values);
    let kde_modes = if bandwidth > 0.0 { estimate_mode_count(values, bandwidth)? } else { 1 };
    let model = models.swap_remove(best);
    Ok(GmmFit { model, kde_modes, candidates, selected: best, warnings })
}

fn count_distinct(values: &[f64]) -> usize {
    let sorted = math::sorted(values);
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// k-means++ seeding followed by a few Lloyd rounds; the hard clusters give
/// the starting weights, means and spreads.
fn kmeans_pp_init<R: Rng>(values: &[f64], m: usize, floor: f64, rng: &mut R) -> GmmModel {
    let n = values.len();
    let mut centers = Vec::with_capacity(m);
    centers.push(values[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = values.iter().map(|&v| (v - centers[0]) * (v - centers[0])).collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            values[pick]
        } else {
            values[rng.gen_range(0..n)]
        };
        centers.push(next);
        for (d, &v) in d2.iter_mut().zip(values) {
            *d = d.min((v - next) * (v - next));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for (a, &v) in assignment.iter_mut().zip(values) {
            let mut best = 0;
            for k in 1..m {
                if (v - centers[k]).abs() < (v - centers[best]).abs() {
                    best = k;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0; m];
        let mut counts = vec![0usize; m];
        for (&a, &v) in assignment.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        for k in 0..m {
            if counts[k] > 0 {
                centers[k] = sums[k] / counts[k] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let overall_sd = math::std_dev(values).max(floor);
    let mut weights = vec![0.0; m];
    let mut var = vec![0.0; m];
    for (&a, &v) in assignment.iter().zip(values) {
        weights[a] += 1.0;
        var[a] += (v - centers[a]) * (v - centers[a]);
    }
    let stds = (0..m)
        .map(|k| if weights[k] > 1.0 { sqrt(var[k] / weights[k]).max(floor) } else { overall_sd })
        .collect();
    // Empty clusters start with a small share so EM can still revive them.
    for w in weights.iter_mut() {
        *w = (*w).max(0.5);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel { weights, means: centers, stds }
}

/// Runs EM until the mean log-likelihood gain drops under [`TOLERANCE`] or
/// [`MAX_ITERATIONS`] is reached.
fn run_em(values: &[f64], mut model: GmmModel, floor: f64) -> (GmmModel, Vec<f64>, usize, bool) {
    let n = values.len();
    let m = model.modes();
    let mut resp = vec![0.0; n * m];
    let mut lp = vec![0.0; m];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        // E-step
        let log_w: Vec<f64> = model.weights.iter().map(|&w| ln(w)).collect();
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for k in 0..m {
                lp[k] = log_w[k] + normal_ln_pdf(x, model.means[k], model.stds[k]);
            }
            let lse = log_sum_exp(&lp);
            ll += lse;
            for k in 0..m {
                resp[i * m + k] = exp(lp[k] - lse);
            }
        }
        let improved_little = trace.last().is_some_and(|&prev: &f64| (ll - prev) / (n as f64) < TOLERANCE);
        trace.push(ll);
        if improved_little {
            converged = true;
            break;
        }
        // M-step
        let mut nk = vec![0.0; m];
        let mut sx = vec![0.0; m];
        for (i, &x) in values.iter().enumerate() {
            for k in 0..m {
                let r = resp[i * m + k];
                nk[k] += r;
                sx[k] += r * x;
            }
        }
        for k in 0..m {
            if nk[k] > 0.0 {
                model.means[k] = sx[k] / nk[k];
            }
        }
        let mut sv = vec![0.0; m];
        for (i, &x) in values.iter().enumerate() {
            for k in 0..m {
                let d = x - model.means[k];
                sv[k] += resp[i * m + k] * d * d;
            }
        }
        for k in 0..m {
            model.weights[k] = nk[k] / n as f64;
            if nk[k] > 0.0 {
                model.stds[k] = sqrt(sv[k] / nk[k]).max(floor);
            }
        }
    }
    (model, trace, iterations, converged)
}

/// Drops light components, renormalizes, and orders components by mean.
fn prune(model: GmmModel) -> GmmModel {
    let keep: Vec<usize> = (0..model.modes()).filter(|&k| model.weights[k] >= WEIGHT_FLOOR).collect();
    let keep = if keep.is_empty() { vec![math::argmax(&model.weights)] } else { keep };
    let total: f64 = keep.iter().map(|&k| model.weights[k]).sum();
    let mut comps: Vec<(f64, f64, f64)> =
        keep.iter().map(|&k| (model.weights[k] / total, model.means[k], model.stds[k])).collect();
    comps.sort_by(|a, b| a.1.total_cmp(&b.1));
    GmmModel {
        weights: comps.iter().map(|c| c.0).collect(),
        means: comps.iter().map(|c| c.1).collect(),
        stds: comps.iter().map(|c| c.2).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_mode_sample(n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = seeded_rng(seed);
        let left = Normal::new(-3.0, 0.5).unwrap();
        let right = Normal::new(3.0, 0.5).unwrap();
        let mut values = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            if rng.gen_bool(0.5) {
                values.push(left.sample(&mut rng));
                labels.push(0);
            } else {
                values.push(right.sample(&mut rng));
                labels.push(1);
            }
        }
        (values, labels)
    }

    /// Straight grid scan with an explicit kernel sum; shares no code with the
    /// implementation.
    fn kde_oracle(values: &[f64], h: f64) -> usize {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let grid: Vec<f64> = (0..512).map(|i| lo + (hi - lo) * i as f64 / 511.0).collect();
        let f: Vec<f64> = grid
            .iter()
            .map(|g| values.iter().map(|v| libm::exp(-((g - v) / h).powi(2) / 2.0)).sum())
            .collect();
        let mut peaks = 0;
        for i in 0..512 {
            let left_ok = i == 0 || f[i] > f[i - 1];
            let right_ok = i == 511 || f[i] >= f[i + 1];
            if left_ok && right_ok {
                peaks += 1;
            }
        }
        peaks
    }

    #[test]
    fn kde_finds_two_modes() {
        let (values, _) = two_mode_sample(5000, 11);
        assert_eq!(kde_oracle(&values, 0.3), 2);
        assert_eq!(estimate_mode_count(&values, 0.3).unwrap(), 2);
    }

    #[test]
    fn kde_single_gaussian_with_silverman_bandwidth() {
        let mut rng = seeded_rng(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        let h = silverman_bandwidth(&values);
        let expected = kde_oracle(&values, h);
        assert_eq!(expected, 1);
        assert_eq!(estimate_mode_count(&values, h).unwrap(), expected);
    }

    #[test]
    fn kde_constant_and_bad_input() {
        assert_eq!(estimate_mode_count(&[2.0; 10], 0.5).unwrap(), 1);
        assert_eq!(estimate_mode_count(&[1.0, f64::NAN], 0.5), Err(GmmError::NonFinite(1)));
        assert_eq!(estimate_mode_count(&[1.0, 2.0], 0.0), Err(GmmError::Bandwidth));
    }

    #[test]
    fn em_recovers_two_mode_mixture() {
        let (values, labels) = two_mode_sample(5000, 3);
        // Oracle: per-component sample statistics under the true labels.
        let mut sums = [0.0; 2];
        let mut counts = [0.0; 2];
        for (v, &l) in values.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1.0;
        }
        let fit = fit_gmm(&values, 4, 9).unwrap();
        let m = &fit.model;
        assert_eq!(m.modes(), 2, "{m:?}");
        for k in 0..2 {
            assert!((m.means()[k] - sums[k] / counts[k]).abs() < 0.05);
            assert!((m.means()[k] - [-3.0, 3.0][k]).abs() < 0.1);
            assert!((m.weights()[k] - 0.5).abs() < 0.05);
        }
        assert_eq!(fit.kde_modes, 2);
    }

    #[test]
    fn em_trace_is_monotone() {
        let (values, _) = two_mode_sample(2000, 4);
        let fit = fit_gmm(&values, 5, 1).unwrap();
        for c in &fit.candidates {
            for w in c.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", c.trace);
            }
        }
    }

    #[test]
    fn single_gaussian_yields_one_dominant_mode() {
        let mut rng = seeded_rng(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..3000).map(|_| normal.sample(&mut rng)).collect();
        let fit = fit_gmm(&values, 3, 2).unwrap();
        let max_w = fit.model.weights().iter().cloned().fold(0.0, f64::max);
        assert!(max_w > 0.9, "{:?}", fit.model);
    }

    #[test]
    fn constant_values_give_floored_single_mode() {
        let fit = fit_gmm(&[7.5; 20], 4, 0).unwrap();
        assert_eq!(fit.model.modes(), 1);
        assert_eq!(fit.model.means()[0], 7.5);
        assert_eq!(fit.model.stds()[0], sigma_floor(7.5, 7.5));
        assert!(fit.warnings.contains(&GmmWarning::Degenerate));
    }

    #[test]
    fn too_few_distinct_values_reduces_modes() {
        let fit = fit_gmm(&[1.0, 1.0, 2.0, 2.0, 2.0], 4, 0).unwrap();
        assert!(fit.warnings.contains(&GmmWarning::ReducedModes { requested: 4, used: 2 }));
        assert!(fit.model.modes() <= 2);
    }

    #[test]
    fn fit_is_deterministic() {
        let (values, _) = two_mode_sample(1000, 21);
        assert_eq!(fit_gmm(&values, 6, 5).unwrap(), fit_gmm(&values, 6, 5).unwrap());
    }

    #[test]
    fn density_values() {
        let one = GmmModel::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert!((gmm_density(&one, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);

        let two = GmmModel::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.7, 0.7]).unwrap();
        let expected = 2.0 * (0.5 * normal_pdf(0.0, 1.0, 0.7));
        assert!((gmm_density(&two, 0.0) - expected).abs() < 1e-15);

        // Trapezoid quadrature over ±10σ of the widest component.
        let m = GmmModel::new(vec![0.3, 0.7], vec![-2.0, 1.5], vec![0.4, 1.1]).unwrap();
        let (a, b, steps) = (-13.0, 13.0, 20_000);
        let h = (b - a) / steps as f64;
        let mut area = 0.5 * (m.density(a) + m.density(b));
        for i in 1..steps {
            area += m.density(a + h * i as f64);
        }
        assert!((area * h - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mode_weight_cases() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![-3.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert!(m.mode_weights(-3.0)[0] > 0.99);
        let mid = m.mode_weights(0.0);
        assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[1] - 0.5).abs() < 1e-12);
        assert_eq!(m.assign(0.0), 0);
        // Far tail: every density underflows, nearest mode wins.
        assert!(m.weighted_densities(1e6).iter().all(|&r| r == 0.0));
        assert_eq!(m.mode_weights(1e6), vec![0.0, 1.0]);
        assert_eq!(m.mode_weights(-1e6), vec![1.0, 0.0]);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(GmmModel::new(vec![0.5, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GmmModel::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GmmModel::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mode_weights_are_a_permutation_equivariant_simplex(
                comps in prop::collection::vec((0.05f64..1.0, -10.0f64..10.0, 0.1f64..3.0), 1..6),
                x in -20.0f64..20.0,
                shift in 0usize..6,
            ) {
                let total: f64 = comps.iter().map(|c| c.0).sum();
                let build = |cs: &[(f64, f64, f64)]| GmmModel::new(
                    cs.iter().map(|c| c.0 / total).collect(),
                    cs.iter().map(|c| c.1).collect(),
                    cs.iter().map(|c| c.2).collect(),
                ).unwrap();
                let model = build(&comps);
                let w = model.mode_weights(x);
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(w.iter().all(|&v| v >= 0.0));

                let mut rotated = comps.clone();
                let s = shift % comps.len();
                rotated.rotate_left(s);
                let mut wr = build(&rotated).mode_weights(x);
                wr.rotate_right(s);
                for (a, b) in w.iter().zip(&wr) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
