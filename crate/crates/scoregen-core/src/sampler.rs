//! Forward OU sampling and Euler–Maruyama integration of the reverse SDE.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::field::ScoreField;
use crate::math::{exp, log, sqrt};
use crate::rng;
use crate::schedule::{mean_scale, noise_scale, DiffusionSchedule};
use crate::targets::Target;
use serde::{Deserialize, Serialize};

pub use crate::field::{Perturbed, Provenance, TrueScore};

/// Paths per random stream.
const CHUNK: usize = 1024;
/// Separates noise streams from the streams the target uses for its own draws.
const NOISE_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// Exact draws of `X_t = m_t X_0 + sigma_t Z`.
pub fn forward_sample(target: &Target, t: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(t >= 0.0) {
        return Err(domain("forward sampling needs t >= 0"));
    }
    let mut xs = target.sample(n, seed);
    if t == 0.0 {
        return Ok(xs);
    }
    let (m, s) = (mean_scale(t), noise_scale(t));
    for (c, chunk) in xs.chunks_mut(CHUNK).enumerate() {
        let mut r = rng::stream(seed ^ NOISE_SALT, c as u64);
        for x in chunk {
            for v in x.iter_mut() {
                *v = m * *v + s * rng::normal(&mut r);
            }
        }
    }
    Ok(xs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Standard Gaussian, the usual stand-in for `P_T`.
    Gaussian,
    /// Exact draws from `P_T` of the supplied target.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseRunSpec {
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub start: Start,
}

impl ReverseRunSpec {
    pub fn new(steps: usize, n_paths: usize, seed: u64) -> Self {
        Self { steps, n_paths, seed, start: Start::Gaussian }
    }
}

/// Forward times from `T` down to `t0`, uniform in `log t`, endpoints exact.
pub fn time_grid(schedule: &DiffusionSchedule, steps: usize) -> Vec<f64> {
    let (lt, l0) = (log(schedule.horizon), log(schedule.t0));
    let mut out: Vec<f64> = (0..=steps).map(|k| exp(lt + (l0 - lt) * k as f64 / steps.max(1) as f64)).collect();
    out[0] = schedule.horizon;
    if steps > 0 {
        out[steps] = schedule.t0;
    }
    out
}

/// Integrates `dY = (Y + 2 score(Y, T - s)) ds + sqrt(2) dB` from `T` to `t0`.
///
/// `target` is only consulted for [`Start::Exact`].
pub fn reverse_sample(
    score: &dyn ScoreField,
    spec: &ReverseRunSpec,
    schedule: &DiffusionSchedule,
    target: Option<&Target>,
) -> Result<Vec<Vec<f64>>> {
    let d = schedule.d;
    if score.dim() != d {
        return Err(Error::Dimension { expected: d, found: score.dim() });
    }
    let grid = time_grid(schedule, spec.steps);
    let mut paths = match spec.start {
        Start::Gaussian => {
            let mut out = Vec::with_capacity(spec.n_paths);
            for c in 0..spec.n_paths.div_ceil(CHUNK) {
                let mut r = rng::stream(spec.seed, 2 * c as u64);
                for _ in c * CHUNK..((c + 1) * CHUNK).min(spec.n_paths) {
                    out.push((0..d).map(|_| rng::normal(&mut r)).collect::<Vec<f64>>());
                }
            }
            out
        }
        Start::Exact => {
            let target = target.ok_or_else(|| domain("exact start needs a target"))?;
            forward_sample(target, schedule.horizon, spec.n_paths, spec.seed ^ 0xa076_1d64_78bd_642f)?
        }
    };
    let mut drift = alloc::vec![0.0; d];
    for (c, chunk) in paths.chunks_mut(CHUNK).enumerate() {
        let mut r = rng::stream(spec.seed, 2 * c as u64 + 1);
        for (p, y) in chunk.iter_mut().enumerate() {
            for k in 0..spec.steps {
                let (t, dt) = (grid[k], grid[k] - grid[k + 1]);
                score.eval_into(y, t, &mut drift);
                let amp = sqrt(2.0 * dt);
                for j in 0..d {
                    y[j] += (y[j] + 2.0 * drift[j]) * dt + amp * rng::normal(&mut r);
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("path {} left the finite range at t = {t}", c * CHUNK + p)));
                }
            }
        }
    }
    Ok(paths)
}

/// `score + bias`.
pub fn perturb<S: ScoreField>(score: S, bias: Vec<f64>) -> Perturbed<S> {
    Perturbed { inner: score, bias }
}

/// Score-matching loss that a constant bias injects: `|bias|^2 (T - t0)`.
pub fn injected_loss(bias: &[f64], schedule: &DiffusionSchedule) -> f64 {
    bias.iter().map(|b| b * b).sum::<f64>() * (schedule.horizon - schedule.t0)
}
