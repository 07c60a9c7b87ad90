//! Analytic targets with exact samplers and exact smoothed scores.
//!
//! "Smoothed" means the law of `scale * X + noise * Z` with `Z` standard
//! normal. The OU marginal at time `t` is the case `scale = m_t`,
//! `noise = sigma_t`; plain Gaussian convolution is `scale = 1`.

use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::math::{erfc, exp, log, log1p, log_sum_exp, sqrt, LN_2PI};
use crate::rng::{self, Rng};
use crate::schedule::{mean_scale, noise_scale};
use serde::{Deserialize, Serialize};

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    /// Zero-weight components are dropped. Weights must sum to one within 1e-12.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if means.len() != weights.len() || variances.len() != weights.len() {
            return Err(Error::Dimension { expected: weights.len(), found: means.len().min(variances.len()) });
        }
        let d = means[0].len();
        if d == 0 {
            return Err(domain("mixture dimension must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(domain("mixture weights must be nonnegative and sum to 1"));
        }
        let mut out = Self { weights: Vec::new(), means: Vec::new(), variances: Vec::new() };
        for ((w, mu), var) in weights.into_iter().zip(means).zip(variances) {
            if mu.len() != d || var.len() != d {
                return Err(Error::Dimension { expected: d, found: mu.len().min(var.len()) });
            }
            if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || mu.iter().any(|m| !m.is_finite()) {
                return Err(domain("component variances must be positive and finite"));
            }
            if w > 0.0 {
                out.weights.push(w);
                out.means.push(mu);
                out.variances.push(var);
            }
        }
        Ok(out)
    }

    /// `N(0, v I)` in dimension `d`.
    pub fn isotropic(d: usize, v: f64) -> Result<Self> {
        Self::new(alloc::vec![1.0], alloc::vec![alloc::vec![0.0; d]], alloc::vec![alloc::vec![v; d]])
    }

    /// `0.5 N(-c, v) + 0.5 N(c, v)` in one dimension.
    pub fn symmetric_pair(c: f64, v: f64) -> Result<Self> {
        Self::new(alloc::vec![0.5, 0.5], alloc::vec![alloc::vec![-c], alloc::vec![c]], alloc::vec![alloc::vec![v], alloc::vec![v]])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    fn component_log_terms(&self, scale: f64, noise: f64, y: &[f64]) -> Vec<f64> {
        let s2 = noise * noise;
        let a2 = scale * scale;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), var)| {
                let mut acc = log(*w);
                for j in 0..y.len() {
                    let v = a2 * var[j] + s2;
                    let r = y[j] - scale * mu[j];
                    acc -= 0.5 * (LN_2PI + log(v) + r * r / v);
                }
                acc
            })
            .collect()
    }

    fn smoothed_log_density(&self, scale: f64, noise: f64, y: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_terms(scale, noise, y))
    }

    fn smoothed_score(&self, scale: f64, noise: f64, y: &[f64]) -> Vec<f64> {
        let terms = self.component_log_terms(scale, noise, y);
        let lse = log_sum_exp(&terms);
        let (a2, s2) = (scale * scale, noise * noise);
        let mut out = alloc::vec![0.0; y.len()];
        for (i, lt) in terms.iter().enumerate() {
            let p = exp(lt - lse);
            for j in 0..y.len() {
                let v = a2 * self.variances[i][j] + s2;
                out[j] -= p * (y[j] - scale * self.means[i][j]) / v;
            }
        }
        out
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let u = rng::uniform(rng);
        let mut k = self.weights.len() - 1;
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        for j in 0..out.len() {
            out[j] = self.means[k][j] + sqrt(self.variances[k][j]) * rng::normal(rng);
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for j in 0..out.len() {
                out[j] += w * mu[j];
            }
        }
        out
    }
}

/// Uniform law on `[0, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformCube {
    pub d: usize,
}

impl UniformCube {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(domain("cube dimension must be positive"));
        }
        Ok(Self { d })
    }
}

/// `log P(Z > u)` for standard normal `Z`, accurate far into both tails.
pub fn log_normal_sf(u: f64) -> f64 {
    if u < 0.0 {
        return log1p(-0.5 * erfc(-u / core::f64::consts::SQRT_2));
    }
    if u < 37.0 {
        return log(0.5 * erfc(u / core::f64::consts::SQRT_2));
    }
    // Asymptotic expansion of the Mills ratio.
    let z = 1.0 / (u * u);
    let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z)));
    -0.5 * u * u - log(u) - 0.5 * LN_2PI + log(series)
}

/// `log(Phi(hi) - Phi(lo))` for `hi > lo`.
fn log_normal_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        let a = log_normal_sf(lo);
        let b = log_normal_sf(hi);
        a + log1p(-exp(b - a))
    } else if hi <= 0.0 {
        let a = log_normal_sf(-hi);
        let b = log_normal_sf(-lo);
        a + log1p(-exp(b - a))
    } else {
        let tails = 0.5 * erfc(hi / core::f64::consts::SQRT_2) + 0.5 * erfc(-lo / core::f64::consts::SQRT_2);
        log1p(-tails)
    }
}

fn log_normal_pdf(u: f64) -> f64 {
    -0.5 * u * u - 0.5 * LN_2PI
}

impl UniformCube {
    fn axis_log_density(scale: f64, noise: f64, y: f64) -> f64 {
        let hi = y / noise;
        let lo = (y - scale) / noise;
        log_normal_interval(lo, hi) - log(scale)
    }

    fn axis_score(scale: f64, noise: f64, y: f64) -> f64 {
        let hi = y / noise;
        let lo = (y - scale) / noise;
        let ld = log_normal_interval(lo, hi);
        (exp(log_normal_pdf(lo) - ld) - exp(log_normal_pdf(hi) - ld)) / noise
    }
}

/// Analytic target distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Mixture(GaussianMixture),
    Cube(UniformCube),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Mixture(g) => g.dim(),
            Target::Cube(c) => c.d,
        }
    }

    /// `n` i.i.d. draws from the base law, reproducible from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n);
        // Chunks of 4096 draws each get their own stream.
        for chunk_start in (0..n).step_by(4096) {
            let mut rng = rng::stream(seed, (chunk_start / 4096) as u64);
            for _ in chunk_start..(chunk_start + 4096).min(n) {
                let mut x = alloc::vec![0.0; d];
                match self {
                    Target::Mixture(g) => g.sample_into(&mut rng, &mut x),
                    Target::Cube(_) => x.iter_mut().for_each(|v| *v = rng::uniform(&mut rng)),
                }
                out.push(x);
            }
        }
        out
    }

    fn check_smoothing(&self, scale: f64, noise: f64, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: y.len() });
        }
        if !(scale > 0.0) {
            return Err(domain("mean scale must be positive"));
        }
        match self {
            Target::Cube(_) if !(noise > 0.0) => Err(domain("the cube's smoothed density needs positive noise")),
            _ if !(noise >= 0.0) => Err(domain("noise scale must be nonnegative")),
            _ => Ok(()),
        }
    }

    /// Log density of `scale * X + noise * Z`.
    pub fn smoothed_log_density(&self, scale: f64, noise: f64, y: &[f64]) -> Result<f64> {
        self.check_smoothing(scale, noise, y)?;
        Ok(match self {
            Target::Mixture(g) => g.smoothed_log_density(scale, noise, y),
            Target::Cube(_) => y.iter().map(|&v| UniformCube::axis_log_density(scale, noise, v)).sum(),
        })
    }

    /// Gradient of the log density of `scale * X + noise * Z`.
    pub fn smoothed_score(&self, scale: f64, noise: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.check_smoothing(scale, noise, y)?;
        Ok(match self {
            Target::Mixture(g) => g.smoothed_score(scale, noise, y),
            Target::Cube(_) => y.iter().map(|&v| UniformCube::axis_score(scale, noise, v)).collect(),
        })
    }

    pub fn log_density(&self, t: f64, y: &[f64]) -> Result<f64> {
        check_t(t)?;
        self.smoothed_log_density(mean_scale(t), noise_scale(t), y)
    }

    pub fn density(&self, t: f64, y: &[f64]) -> Result<f64> {
        Ok(exp(self.log_density(t, y)?))
    }

    /// Score of the OU marginal at time `t`.
    pub fn score(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_t(t)?;
        self.smoothed_score(mean_scale(t), noise_scale(t), y)
    }

    /// Mean of the OU marginal at time `t`.
    pub fn marginal_mean(&self, t: f64) -> Vec<f64> {
        let base = match self {
            Target::Mixture(g) => g.mean(),
            Target::Cube(c) => alloc::vec![0.5; c.d],
        };
        base.into_iter().map(|v| mean_scale(t) * v).collect()
    }

    /// Base density at `x` (time zero).
    pub fn base_density(&self, x: &[f64]) -> f64 {
        match self {
            Target::Mixture(g) => exp(g.smoothed_log_density(1.0, 0.0, x)),
            Target::Cube(_) => {
                if x.iter().all(|v| (0.0..=1.0).contains(v)) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Center and spread used to place quadrature grids.
    pub fn location_and_spread(&self) -> (Vec<f64>, f64) {
        match self {
            Target::Mixture(g) => {
                let mean = g.mean();
                let mut spread: f64 = 0.0;
                for (mu, var) in g.means.iter().zip(&g.variances) {
                    for j in 0..mu.len() {
                        spread = spread.max((mu[j] - mean[j]).abs() + sqrt(var[j]));
                    }
                }
                (mean, spread.max(1.0))
            }
            Target::Cube(c) => (alloc::vec![0.5; c.d], 1.0),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain("time must be nonnegative and finite"))
    }
}

/// Tent density on `[0, 1]` with peak 2 at one half; continuous with three kinks.
pub fn triangle_density(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x <= 0.5 {
        4.0 * x
    } else {
        4.0 * (1.0 - x)
    }
}
