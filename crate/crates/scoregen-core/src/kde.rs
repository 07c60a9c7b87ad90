//! Gaussian kernel estimate of the OU-smoothed empirical law and its scores.
//!
//! All arithmetic happens on kernel exponents `-|y - m_t x_i|^2 / (2 sigma_t^2)`
//! with a shifted softmax, so nothing underflows even when `sigma_t` is tiny.

use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::field::{Provenance, ScoreField};
use crate::math::{exp, log, pairwise_sum_by, sqrt, LN_2PI, LOG_FLOOR};
use crate::rng;
use crate::schedule::{log_regularizer, mean_scale, noise_scale, noise_var, DiffusionSchedule};
use crate::targets::Target;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeScoreEstimator {
    d: usize,
    /// Row-major `n x d`.
    samples: Vec<f64>,
    schedule: DiffusionSchedule,
}

/// Everything one pass over the samples yields at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct KdePoint {
    /// `log p_hat_t(y)`, floored at [`LOG_FLOOR`].
    pub log_density: f64,
    /// `log((1/n) sum_i exp(exponent_i))`, the kernel average without normalizer.
    pub log_kernel_mean: f64,
    /// `grad p_hat / p_hat`, the unregularized score.
    pub score: Vec<f64>,
}

impl KdeScoreEstimator {
    pub fn new(samples: &[Vec<f64>], schedule: DiffusionSchedule) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let d = schedule.d;
        let mut flat = Vec::with_capacity(samples.len() * d);
        for x in samples {
            if x.len() != d {
                return Err(Error::Dimension { expected: d, found: x.len() });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(domain("samples must be finite"));
            }
            flat.extend_from_slice(x);
        }
        Ok(Self { d, samples: flat, schedule })
    }

    pub fn n(&self) -> usize {
        self.samples.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    fn check(&self, t: f64, y: &[f64]) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(domain("kernel estimates need t > 0"));
        }
        if y.len() != self.d {
            return Err(Error::Dimension { expected: self.d, found: y.len() });
        }
        Ok(())
    }

    fn exponents(&self, t: f64, y: &[f64], buf: &mut Vec<f64>) -> f64 {
        let m = mean_scale(t);
        let inv = 0.5 / noise_var(t);
        buf.clear();
        let mut max = f64::NEG_INFINITY;
        for x in self.samples.chunks_exact(self.d) {
            let mut r2 = 0.0;
            for j in 0..self.d {
                let r = y[j] - m * x[j];
                r2 += r * r;
            }
            let e = -r2 * inv;
            max = max.max(e);
            buf.push(e);
        }
        max
    }

    /// Density, kernel mean and unregularized score in one pass.
    pub fn point(&self, t: f64, y: &[f64]) -> Result<KdePoint> {
        self.check(t, y)?;
        let mut buf = Vec::with_capacity(self.n());
        Ok(self.point_with(t, y, &mut buf))
    }

    fn point_with(&self, t: f64, y: &[f64], buf: &mut Vec<f64>) -> KdePoint {
        let max = self.exponents(t, y, buf);
        let m = mean_scale(t);
        let s2 = noise_var(t);
        let n = self.n();
        let total = pairwise_sum_by(n, |i| exp(buf[i] - max));
        let mut score = alloc::vec![0.0; self.d];
        for j in 0..self.d {
            let mean_j = pairwise_sum_by(n, |i| exp(buf[i] - max) * self.samples[i * self.d + j]) / total;
            score[j] = (m * mean_j - y[j]) / s2;
        }
        let log_kernel_mean = max + log(total) - log(n as f64);
        let log_density = (log_kernel_mean - 0.5 * self.d as f64 * (LN_2PI + log(s2))).max(LOG_FLOOR);
        KdePoint { log_density, log_kernel_mean, score }
    }

    pub fn log_density(&self, t: f64, y: &[f64]) -> Result<f64> {
        Ok(self.point(t, y)?.log_density)
    }

    /// `(1/n) sum_i exp(-|y - m_t x_i|^2 / (2 sigma_t^2))`, a number in `[0, 1]`.
    pub fn kernel_mean(&self, t: f64, y: &[f64]) -> Result<f64> {
        Ok(exp(self.point(t, y)?.log_kernel_mean))
    }

    /// `grad p_hat / max(p_hat, rho)` with `rho` the regularizer at `(n, t)`.
    pub fn regularized_score(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let p = self.point(t, y)?;
        Ok(self.regularize(t, p))
    }

    fn regularize(&self, t: f64, p: KdePoint) -> Vec<f64> {
        let log_rho = log_regularizer(self.n(), t, self.d).expect("checked t > 0");
        let factor = exp((p.log_density - log_rho).min(0.0));
        let out: Vec<f64> = p.score.into_iter().map(|g| g * factor).collect();
        debug_assert!(
            crate::math::norm2(&out) <= score_bound(self.n(), t) * (1.0 + 1e-12),
            "regularized score exceeds its uniform bound"
        );
        out
    }

    /// `grad p_hat / p_hat` where `p_hat > rho`, zero elsewhere.
    pub fn truncated_score(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let p = self.point(t, y)?;
        let log_rho = log_regularizer(self.n(), t, self.d)?;
        if p.log_density > log_rho {
            Ok(p.score)
        } else {
            Ok(alloc::vec![0.0; self.d])
        }
    }

    pub fn regularized(&self) -> Regularized<'_> {
        Regularized(self)
    }

    pub fn truncated(&self) -> Truncated<'_> {
        Truncated(self)
    }
}

/// `sqrt(2 (log n + 1)) / sigma_t`, the uniform bound on the regularized score.
pub fn score_bound(n: usize, t: f64) -> f64 {
    sqrt(2.0 * (log(n as f64) + 1.0)) / noise_scale(t)
}

pub struct Regularized<'a>(&'a KdeScoreEstimator);
pub struct Truncated<'a>(&'a KdeScoreEstimator);

impl ScoreField for Regularized<'_> {
    fn dim(&self) -> usize {
        self.0.d
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        let mut buf = Vec::with_capacity(self.0.n());
        let p = self.0.point_with(t, y, &mut buf);
        out.copy_from_slice(&self.0.regularize(t, p));
    }
    fn provenance(&self) -> Provenance {
        Provenance::KdeRegularized
    }
}

impl ScoreField for Truncated<'_> {
    fn dim(&self) -> usize {
        self.0.d
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0.truncated_score(t, y).expect("valid time"));
    }
    fn provenance(&self) -> Provenance {
        Provenance::KdeTruncated
    }
}

/// How to integrate against the marginal density `p_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quadrature {
    /// Trapezoid (d = 1) or tensor trapezoid (d = 2) with `points` per axis on
    /// `center +- half_widths * sd`, where `sd` is the marginal's standard deviation.
    Grid { points: usize, half_widths: f64 },
    /// Monte Carlo over `draws` samples of `p_t`.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Quadrature {
    /// 2001 nodes in one dimension, 301 per axis in two, 10^5 draws beyond.
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => Quadrature::Grid { points: 2001, half_widths: 8.0 },
            2 => Quadrature::Grid { points: 301, half_widths: 8.0 },
            _ => Quadrature::MonteCarlo { draws: 100_000, seed: 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Monte Carlo standard error; zero for deterministic quadrature.
    pub std_err: f64,
}

/// Nodes whose weight is below this fraction contribute nothing measurable.
const NEGLIGIBLE_LOG_WEIGHT: f64 = -575.0;

/// Per-axis standard deviation of the OU marginal, taken as the largest over axes.
pub fn marginal_sd(target: &Target, t: f64) -> f64 {
    let m = mean_scale(t);
    let s2 = noise_var(t);
    let base_var = match target {
        Target::Mixture(g) => {
            let mean = g.mean();
            let mut worst: f64 = 0.0;
            for j in 0..g.dim() {
                let mut v = 0.0;
                for ((w, mu), var) in g.weights().iter().zip(g.means()).zip(g.variances()) {
                    v += w * (var[j] + (mu[j] - mean[j]) * (mu[j] - mean[j]));
                }
                worst = worst.max(v);
            }
            worst
        }
        Target::Cube(_) => 1.0 / 12.0,
    };
    sqrt(m * m * base_var + s2)
}

/// Quadrature nodes and weights (weights include `p_t`) for `p_t`-expectations.
pub fn weighted_nodes(target: &Target, t: f64, quad: Quadrature) -> Result<(Vec<Vec<f64>>, Vec<f64>, bool)> {
    let d = target.dim();
    match quad {
        Quadrature::Grid { points, half_widths } => {
            if points < 2 || !(half_widths > 0.0) {
                return Err(Error::Empty("quadrature nodes"));
            }
            if d > 2 {
                return Err(domain("grid quadrature supports d <= 2"));
            }
            let center = target.marginal_mean(t);
            let hw = half_widths * marginal_sd(target, t);
            let axes: Vec<Vec<f64>> = (0..d).map(|j| crate::math::linspace(center[j] - hw, center[j] + hw, points)).collect();
            let h = 2.0 * hw / (points - 1) as f64;
            let tw = |i: usize| if i == 0 || i == points - 1 { 0.5 * h } else { h };
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            let total = if d == 1 { points } else { points * points };
            for k in 0..total {
                let (y, w): (Vec<f64>, f64) = if d == 1 {
                    (alloc::vec![axes[0][k]], tw(k))
                } else {
                    let (a, b) = (k / points, k % points);
                    (alloc::vec![axes[0][a], axes[1][b]], tw(a) * tw(b))
                };
                let lp = target.log_density(t, &y)?;
                if lp > NEGLIGIBLE_LOG_WEIGHT {
                    nodes.push(y);
                    weights.push(w * exp(lp));
                }
            }
            Ok((nodes, weights, false))
        }
        Quadrature::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::Empty("Monte Carlo draws"));
            }
            let m = mean_scale(t);
            let s = noise_scale(t);
            let base = target.sample(draws, seed);
            let mut noise = rng::stream(seed ^ 0x9e37_79b9_7f4a_7c15, 0);
            let nodes: Vec<Vec<f64>> =
                base.into_iter().map(|x| x.into_iter().map(|v| m * v + s * rng::normal(&mut noise)).collect()).collect();
            let w = 1.0 / draws as f64;
            let weights = alloc::vec![w; nodes.len()];
            Ok((nodes, weights, true))
        }
    }
}

/// `E_{p_t} |a(Y, t) - b(Y, t)|^2`.
pub fn weighted_mse(a: &dyn ScoreField, b: &dyn ScoreField, t: f64, weight: &Target, quad: Quadrature) -> Result<Estimate> {
    if a.dim() != b.dim() || a.dim() != weight.dim() {
        return Err(Error::Dimension { expected: weight.dim(), found: a.dim().min(b.dim()) });
    }
    if !(t > 0.0) {
        return Err(domain("weighted error needs t > 0"));
    }
    let (nodes, weights, mc) = weighted_nodes(weight, t, quad)?;
    if nodes.is_empty() {
        return Err(Error::Empty("quadrature nodes"));
    }
    let d = a.dim();
    let mut va = alloc::vec![0.0; d];
    let mut vb = alloc::vec![0.0; d];
    let sq: Vec<f64> = nodes
        .iter()
        .map(|y| {
            a.eval_into(y, t, &mut va);
            b.eval_into(y, t, &mut vb);
            crate::math::sq_dist(&va, &vb)
        })
        .collect();
    let value = pairwise_sum_by(sq.len(), |i| weights[i] * sq[i]);
    let std_err = if mc {
        let k = sq.len() as f64;
        let var = pairwise_sum_by(sq.len(), |i| (sq[i] - value) * (sq[i] - value)) / (k - 1.0);
        sqrt(var / k)
    } else {
        0.0
    };
    Ok(Estimate { value, std_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(xs: &[f64], t0: f64) -> KdeScoreEstimator {
        let s = DiffusionSchedule::new(t0, 5.0, 1, 1.0).unwrap();
        let v: Vec<Vec<f64>> = xs.iter().map(|x| alloc::vec![*x]).collect();
        KdeScoreEstimator::new(&v, s).unwrap()
    }

    #[test]
    fn single_kernel_log_density() {
        let e = est(&[0.0], 0.01);
        let t = 0.3;
        let s2 = noise_var(t);
        for y in [-1.0, 0.0, 0.4] {
            let want = -y * y / (2.0 * s2) - 0.5 * log(2.0 * core::f64::consts::PI * s2);
            assert!((e.log_density(t, &[y]).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_pair_at_origin() {
        let a = 0.8;
        let e = est(&[-a, a], 0.01);
        let t = 0.2;
        let m = mean_scale(t);
        let s2 = noise_var(t);
        let want = -(m * a) * (m * a) / (2.0 * s2) - 0.5 * log(2.0 * core::f64::consts::PI * s2);
        assert!((e.log_density(t, &[0.0]).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn gaussian_score_in_high_density_region() {
        let e = est(&[0.0], 0.01);
        let t = 0.5;
        let y = 0.3;
        let g = e.regularized_score(t, &[y]).unwrap();
        assert!((g[0] + y / noise_var(t)).abs() < 1e-13);
    }

    #[test]
    fn tail_is_floored_not_nan() {
        let e = est(&[0.0], 0.01);
        let lp = e.log_density(1e-4, &[1e3]).unwrap();
        assert_eq!(lp, LOG_FLOOR);
        let g = e.regularized_score(1e-4, &[1e3]).unwrap();
        assert!(g[0].is_finite());
        assert_eq!(e.truncated_score(1e-4, &[1e3]).unwrap(), alloc::vec![0.0]);
    }

    #[test]
    fn domain_errors() {
        let e = est(&[0.0], 0.01);
        assert!(e.log_density(0.0, &[0.0]).is_err());
        assert!(e.regularized_score(-1.0, &[0.0]).is_err());
        assert!(e.truncated_score(0.1, &[0.0, 1.0]).is_err());
        let s = DiffusionSchedule::new(0.1, 1.0, 1, 1.0).unwrap();
        assert!(KdeScoreEstimator::new(&[], s).is_err());
    }
}
