//! Ornstein–Uhlenbeck time map, regularizer and early-stopping choices.

use crate::error::{domain, Result};
use crate::math::{exp, expm1, log, pow, sqrt, LN_2PI};
use serde::{Deserialize, Serialize};

/// Mean scale `exp(-t)`; caller guarantees `t >= 0`.
#[inline]
pub fn mean_scale(t: f64) -> f64 {
    exp(-t)
}

/// Noise variance `1 - exp(-2t)`, exact for small `t`.
#[inline]
pub fn noise_var(t: f64) -> f64 {
    -expm1(-2.0 * t)
}

#[inline]
pub fn noise_scale(t: f64) -> f64 {
    sqrt(noise_var(t))
}

pub fn m(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(mean_scale(t))
}

pub fn sigma(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(noise_scale(t))
}

/// Density floor `(2 pi sigma_t^2)^{-d/2} / (e n)` used by the regularized score.
pub fn regularizer(n: usize, t: f64, d: usize) -> Result<f64> {
    Ok(exp(log_regularizer(n, t, d)?))
}

pub fn log_regularizer(n: usize, t: f64, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(domain("regularizer needs n >= 1"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain("regularizer needs t > 0"));
    }
    Ok(-0.5 * d as f64 * (LN_2PI + log(noise_var(t))) - 1.0 - log(n as f64))
}

/// Early-stopping time `n^{-2/(d+2s)}` for smoothness `s` in `(0, 2]`.
pub fn early_stop_time(n: usize, s: f64, d: usize) -> Result<f64> {
    if !(s > 0.0 && s <= 2.0) {
        return Err(domain("smoothness must lie in (0, 2]"));
    }
    if n == 0 || d == 0 {
        return Err(domain("early stopping needs n >= 1 and d >= 1"));
    }
    Ok(pow(n as f64, -2.0 / (d as f64 + 2.0 * s)))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(domain("time must be nonnegative"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub t0: f64,
    pub horizon: f64,
    pub d: usize,
    /// Sub-Gaussian parameter of the target; carried along, never used in arithmetic here.
    pub alpha: f64,
}

impl DiffusionSchedule {
    pub fn new(t0: f64, horizon: f64, d: usize, alpha: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 < horizon && horizon.is_finite()) {
            return Err(domain("schedule needs 0 < t0 < T < inf"));
        }
        if d == 0 {
            return Err(domain("dimension must be positive"));
        }
        if !(alpha >= 0.0) {
            return Err(domain("alpha must be nonnegative"));
        }
        Ok(Self { t0, horizon, d, alpha })
    }

    /// Schedule with `t0 = n^{-2/(d+2s)}` and horizon `c log n`.
    pub fn for_sample_size(n: usize, s: f64, d: usize, horizon_factor: f64, alpha: f64) -> Result<Self> {
        let t0 = early_stop_time(n, s, d)?;
        Self::new(t0, horizon_factor * log(n as f64), d, alpha)
    }

    pub fn m(&self, t: f64) -> f64 {
        mean_scale(t)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        noise_scale(t)
    }

    pub fn sigma_sq(&self, t: f64) -> f64 {
        noise_var(t)
    }

    pub fn regularizer(&self, n: usize, t: f64) -> Result<f64> {
        regularizer(n, t, self.d)
    }
}

/// Time at which `sigma_t` equals `s`, for `s` in `(0, 1)`.
pub fn time_for_sigma(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(domain("sigma must lie in (0, 1)"));
    }
    Ok(-0.5 * libm::log1p(-s * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        assert_eq!(m(0.0).unwrap(), 1.0);
        assert!((m(0.5).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!(m(50.0).unwrap() < 1e-20);
        assert_eq!(sigma(0.0).unwrap(), 0.0);
        assert!((sigma(0.5).unwrap() - 0.795_060_097_620_650_1).abs() < 1e-14);
        assert!(m(-1.0).is_err() && sigma(-1e-9).is_err());
    }

    #[test]
    fn regularizer_and_early_stop() {
        assert!(regularizer(10, 0.0, 1).is_err());
        let t = time_for_sigma(1.0 / sqrt(2.0 * core::f64::consts::PI)).unwrap();
        assert!((regularizer(1, t, 1).unwrap() - exp(-1.0)).abs() < 1e-14);
        assert!(early_stop_time(10, 2.5, 1).is_err());
        assert!((early_stop_time(1_000_000, 2.0, 2).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(early_stop_time(1, 1.3, 3).unwrap(), 1.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(DiffusionSchedule::new(0.1, 0.05, 1, 1.0).is_err());
        assert!(DiffusionSchedule::new(0.0, 1.0, 1, 1.0).is_err());
        let s = DiffusionSchedule::for_sample_size(1024, 1.0, 1, 1.0, 1.0).unwrap();
        assert!((s.horizon - log(1024.0)).abs() < 1e-15);
    }
}
