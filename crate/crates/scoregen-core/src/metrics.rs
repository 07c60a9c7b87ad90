//! Divergences, losses and log-log rate fits.

use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::field::ScoreField;
use crate::kde::{weighted_mse, Estimate, Quadrature};
use crate::math::{exp, log, log_sum_exp, normal_pdf, pairwise_sum_by, sqrt, trapezoid, LN_2PI};
use crate::rng;
use crate::targets::Target;
use serde::{Deserialize, Serialize};

/// `int_{grid} E_{p_t} |a - b|^2 dt` by the trapezoid rule over `t_grid`.
pub fn score_matching_loss(
    a: &dyn ScoreField,
    b: &dyn ScoreField,
    weight: &Target,
    t_grid: &[f64],
    quad: Quadrature,
) -> Result<Estimate> {
    if t_grid.len() < 2 {
        return Err(Error::Empty("time grid"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return Err(domain("time grid must be positive and increasing"));
    }
    let per_t = t_grid.iter().map(|&t| weighted_mse(a, b, t, weight, quad)).collect::<Result<Vec<_>>>()?;
    Ok(integrate_in_time(t_grid, &per_t))
}

/// Trapezoid over `t` of per-time estimates, with errors combined in quadrature.
pub fn integrate_in_time(t_grid: &[f64], per_t: &[Estimate]) -> Estimate {
    let values: Vec<f64> = per_t.iter().map(|e| e.value).collect();
    let value = trapezoid(t_grid, &values);
    let k = t_grid.len();
    let var = pairwise_sum_by(k, |i| {
        let left = if i > 0 { t_grid[i] - t_grid[i - 1] } else { 0.0 };
        let right = if i + 1 < k { t_grid[i + 1] - t_grid[i] } else { 0.0 };
        let w = 0.5 * (left + right);
        w * w * per_t[i].std_err * per_t[i].std_err
    });
    Estimate { value, std_err: sqrt(var) }
}

/// Histogram binning on an axis-aligned box; out-of-range points land in one overflow cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub bins: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Binning {
    pub fn new(bins: usize, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if bins == 0 || lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(domain("histogram range is degenerate"));
        }
        if lo.len() > 2 {
            return Err(domain("histogram TV supports d <= 2"));
        }
        Ok(Self { bins, lo, hi })
    }

    pub fn uniform_1d(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(bins, alloc::vec![lo], alloc::vec![hi])
    }

    fn cells(&self) -> usize {
        self.bins.pow(self.lo.len() as u32) + 1
    }

    fn cell(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for j in 0..self.lo.len() {
            let u = (x[j] - self.lo[j]) / (self.hi[j] - self.lo[j]);
            if !(0.0..1.0).contains(&u) {
                return self.cells() - 1;
            }
            idx = idx * self.bins + ((u * self.bins as f64) as usize).min(self.bins - 1);
        }
        idx
    }

    fn counts(&self, xs: &[Vec<f64>], pick: impl Fn(usize) -> usize) -> Vec<f64> {
        let mut c = alloc::vec![0.0; self.cells()];
        for i in 0..xs.len() {
            c[self.cell(&xs[pick(i)])] += 1.0;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    /// Bootstrap standard error.
    pub std_err: f64,
}

const BOOTSTRAP_ROUNDS: usize = 100;

fn half_l1(p: &[f64], np: f64, q: &[f64], nq: f64) -> f64 {
    0.5 * pairwise_sum_by(p.len(), |i| (p[i] / np - q[i] / nq).abs())
}

/// Binned total variation `0.5 sum |p_bin - q_bin|` between two sample sets.
pub fn tv_histogram(a: &[Vec<f64>], b: &[Vec<f64>], binning: &Binning) -> Result<TvEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let value = half_l1(&binning.counts(a, |i| i), na, &binning.counts(b, |i| i), nb);
    let mut r = rng::stream(0x7c15_2f3a, 0);
    let mut reps = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    for _ in 0..BOOTSTRAP_ROUNDS {
        let ia: Vec<usize> = (0..a.len()).map(|_| rng::index(&mut r, a.len())).collect();
        let ib: Vec<usize> = (0..b.len()).map(|_| rng::index(&mut r, b.len())).collect();
        reps.push(half_l1(&binning.counts(a, |i| ia[i]), na, &binning.counts(b, |i| ib[i]), nb));
    }
    Ok(TvEstimate { value, std_err: std_dev(&reps) })
}

/// Binned total variation between samples and a 1-D law given by its distribution function.
pub fn tv_histogram_vs_cdf(a: &[Vec<f64>], binning: &Binning, cdf: &dyn Fn(f64) -> f64) -> Result<TvEstimate> {
    if a.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if binning.lo.len() != 1 {
        return Err(domain("distribution-function comparison is one-dimensional"));
    }
    let (lo, hi, k) = (binning.lo[0], binning.hi[0], binning.bins);
    let edges: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
    let mut q: Vec<f64> = edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
    q.push(1.0 - (cdf(hi) - cdf(lo)));
    let na = a.len() as f64;
    let value = half_l1(&binning.counts(a, |i| i), na, &q, 1.0);
    let mut r = rng::stream(0x7c15_2f3b, 0);
    let mut reps = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    for _ in 0..BOOTSTRAP_ROUNDS {
        let ia: Vec<usize> = (0..a.len()).map(|_| rng::index(&mut r, a.len())).collect();
        reps.push(half_l1(&binning.counts(a, |i| ia[i]), na, &q, 1.0));
    }
    Ok(TvEstimate { value, std_err: std_dev(&reps) })
}

fn std_dev(xs: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0))
}

/// Quadrature grid: nodes with trapezoid weights (tensor product in 2-D).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn uniform_1d(a: f64, b: f64, points: usize) -> Result<Self> {
        if points < 2 || !(b > a) {
            return Err(Error::Empty("grid nodes"));
        }
        let h = (b - a) / (points - 1) as f64;
        let xs = crate::math::linspace(a, b, points);
        let weights = (0..points).map(|i| if i == 0 || i + 1 == points { 0.5 * h } else { h }).collect();
        Ok(Self { nodes: xs.into_iter().map(|x| alloc::vec![x]).collect(), weights })
    }

    pub fn tensor_2d(a: [f64; 2], b: [f64; 2], points: usize) -> Result<Self> {
        let gx = Self::uniform_1d(a[0], b[0], points)?;
        let gy = Self::uniform_1d(a[1], b[1], points)?;
        let mut nodes = Vec::with_capacity(points * points);
        let mut weights = Vec::with_capacity(points * points);
        for (x, wx) in gx.nodes.iter().zip(&gx.weights) {
            for (y, wy) in gy.nodes.iter().zip(&gy.weights) {
                nodes.push(alloc::vec![x[0], y[0]]);
                weights.push(wx * wy);
            }
        }
        Ok(Self { nodes, weights })
    }
}

/// Integrand tails where `p` falls below this are dropped.
const P_FLOOR: f64 = 1e-14;
const Q_FLOOR: f64 = 1e-300;

/// `int p log(p / q)` from log-densities on a grid.
pub fn kl_grid_log(log_p: &dyn Fn(&[f64]) -> f64, log_q: &dyn Fn(&[f64]) -> f64, grid: &Grid) -> f64 {
    let lq_floor = log(Q_FLOOR);
    pairwise_sum_by(grid.nodes.len(), |i| {
        let y = &grid.nodes[i];
        let lp = log_p(y);
        let p = exp(lp);
        if p < P_FLOOR {
            return 0.0;
        }
        grid.weights[i] * p * (lp - log_q(y).max(lq_floor))
    })
}

pub fn kl_grid(p: &dyn Fn(&[f64]) -> f64, q: &dyn Fn(&[f64]) -> f64, grid: &Grid) -> f64 {
    kl_grid_log(&|y| log(p(y)), &|y| log(q(y)), grid)
}

/// `int (sqrt p - sqrt q)^2` on a grid.
pub fn hellinger_grid(p: &dyn Fn(&[f64]) -> f64, q: &dyn Fn(&[f64]) -> f64, grid: &Grid) -> f64 {
    pairwise_sum_by(grid.nodes.len(), |i| {
        let y = &grid.nodes[i];
        let r = sqrt(p(y)) - sqrt(q(y));
        grid.weights[i] * r * r
    })
}

/// `0.5 int |p - q|` on a grid.
pub fn tv_grid(p: &dyn Fn(&[f64]) -> f64, q: &dyn Fn(&[f64]) -> f64, grid: &Grid) -> f64 {
    0.5 * pairwise_sum_by(grid.nodes.len(), |i| grid.weights[i] * (p(&grid.nodes[i]) - q(&grid.nodes[i])).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergences {
    pub kl: f64,
    pub hellinger_sq: f64,
    pub tv: f64,
}

/// KL, squared Hellinger and TV together, with `H^2 <= KL` and Pinsker checked.
pub fn divergences(p: &dyn Fn(&[f64]) -> f64, q: &dyn Fn(&[f64]) -> f64, grid: &Grid, tol: f64) -> Result<Divergences> {
    let kl = kl_grid(p, q, grid);
    let hellinger_sq = hellinger_grid(p, q, grid);
    let tv = tv_grid(p, q, grid);
    if hellinger_sq > kl + tol {
        return Err(Error::Numeric(alloc::format!("H^2 = {hellinger_sq} exceeds KL = {kl}")));
    }
    if tv > sqrt(0.5 * kl.max(0.0)) + tol {
        return Err(Error::Numeric(alloc::format!("TV = {tv} exceeds sqrt(KL/2) with KL = {kl}")));
    }
    Ok(Divergences { kl, hellinger_sq, tv })
}

/// `KL(P_hat * N(0, s^2) || P * N(0, s^2))` for `n` draws from `target`.
pub fn smoothed_empirical_kl(target: &Target, n: usize, sigma: f64, seed: u64, grid: &Grid) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain("smoothing scale must be positive"));
    }
    if n == 0 {
        return Err(Error::Empty("samples"));
    }
    let d = target.dim();
    if d > 2 || grid.nodes.first().map(|y| y.len()) != Some(d) {
        return Err(domain("grid dimension must match a target with d <= 2"));
    }
    let xs = target.sample(n, seed);
    let inv = 0.5 / (sigma * sigma);
    let norm = -0.5 * d as f64 * (LN_2PI + 2.0 * log(sigma)) - log(n as f64);
    let mut buf = Vec::with_capacity(n);
    let log_emp = |y: &[f64], buf: &mut Vec<f64>| {
        buf.clear();
        buf.extend(xs.iter().map(|x| -crate::math::sq_dist(y, x) * inv));
        log_sum_exp(buf) + norm
    };
    let lq_floor = log(Q_FLOOR);
    let mut terms = Vec::with_capacity(grid.nodes.len());
    for (y, w) in grid.nodes.iter().zip(&grid.weights) {
        let lp = log_emp(y, &mut buf);
        let p = exp(lp);
        if p < P_FLOOR {
            terms.push(0.0);
            continue;
        }
        let lq = target.smoothed_log_density(1.0, sigma, y)?.max(lq_floor);
        terms.push(w * p * (lp - lq));
    }
    Ok(crate::math::pairwise_sum(&terms))
}

/// Gaussian convolution `(p * phi_sigma)(x)` by trapezoid quadrature over `|z| <= 9`.
pub fn convolve_gaussian(density: &dyn Fn(f64) -> f64, sigma: f64, x: f64) -> f64 {
    const NODES: usize = 1201;
    const REACH: f64 = 9.0;
    let h = 2.0 * REACH / (NODES - 1) as f64;
    h * pairwise_sum_by(NODES, |k| {
        let z = -REACH + h * k as f64;
        density(x - sigma * z) * normal_pdf(z)
    })
}

/// `int |p - p * phi_sigma|` over a 1-D grid.
pub fn truncation_l1(density: &dyn Fn(f64) -> f64, sigma: f64, grid: &Grid) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain("smoothing scale must be positive"));
    }
    if grid.nodes.first().map(|y| y.len()) != Some(1) {
        return Err(domain("truncation error is one-dimensional"));
    }
    Ok(pairwise_sum_by(grid.nodes.len(), |i| {
        let x = grid.nodes[i][0];
        grid.weights[i] * (density(x) - convolve_gaussian(density, sigma, x)).abs()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the log-space residuals.
    pub residual: f64,
}

/// Least-squares line through `(log x, log y)`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 3 {
        return Err(domain("a rate fit needs at least three points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(domain("rate fits need positive finite values"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("x values must be strictly increasing"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| log(*v)).collect();
    let ly: Vec<f64> = ys.iter().map(|v| log(*v)).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = sqrt(lx.iter().zip(&ly).map(|(a, b)| { let r = b - intercept - slope * a; r * r }).sum());
    Ok(RateFit { xs: xs.to_vec(), ys: ys.to_vec(), slope, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_exact_power() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        let f = fit_rate(&xs, &ys).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, -2.0, 1.0]).is_err());
    }

    #[test]
    fn identical_samples_have_zero_tv() {
        let xs: Vec<Vec<f64>> = (0..100).map(|i| alloc::vec![i as f64 / 50.0 - 1.0]).collect();
        let b = Binning::uniform_1d(16, -2.0, 2.0).unwrap();
        assert_eq!(tv_histogram(&xs, &xs, &b).unwrap().value, 0.0);
        assert!(Binning::uniform_1d(16, 1.0, 1.0).is_err());
    }
}
