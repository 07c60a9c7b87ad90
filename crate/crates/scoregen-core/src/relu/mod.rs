//! Constructive ReLU networks for the kernel score estimator.
//!
//! Builders return a network together with an [`ErrorCertificate`]: the
//! sup-norm error measured on a dense grid, the bound it must respect, and the
//! width/depth budget it was checked against.

mod basic;
mod cert;
mod kde_net;
mod network;
mod poly;
mod special;
mod step;

pub use basic::{build_abs, build_clamp, build_max, build_mid, build_min, build_point_fit, build_point_fit_certified, identity_gadget, piecewise_linear};
pub use cert::{ErrorCertificate, SizeBudget};

pub use network::{Layer, ReluNetwork, Scratch, Sparse};
pub use poly::{build_monomial, build_polynomial, build_product, build_square};
pub use kde_net::{build_kde_net, build_kde_net_capped, build_score_net, build_score_net_capped, KdeNetLayout, DEFAULT_PARAM_CAP};
pub use special::{build_exp, build_reciprocal, build_reciprocal_on, build_root, build_schedule_nets, ScheduleNets};
pub use step::{build_step, build_step_certified, build_step_parts};

use alloc::format;
use alloc::string::String;

use crate::error::{domain, Result};

/// Size and accuracy knobs shared by the builders.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ApproxParams {
    /// Width parameter.
    pub n: usize,
    /// Depth parameter.
    pub l: usize,
    /// Taylor order.
    pub s: usize,
    /// Accuracy scale in (0, 1).
    pub eps: f64,
}

impl ApproxParams {
    pub fn new(n: usize, l: usize, s: usize, eps: f64) -> Result<Self> {
        if n == 0 || l == 0 || s == 0 {
            return Err(domain(format!("N, L and s must be positive, got N={n} L={l} s={s}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(Self { n, l, s, eps })
    }

    /// Parameters with `eps = N^-2 L^-2`, the smallest admissible scale.
    pub fn tight(n: usize, l: usize, s: usize) -> Result<Self> {
        let eps = 1.0 / ((n * n * l * l) as f64);
        if eps >= 1.0 {
            return Err(domain("N = L = 1 leaves no admissible eps"));
        }
        Self::new(n, l, s, eps)
    }

    /// `N^-2 L^-2`.
    pub fn resolution(&self) -> f64 {
        1.0 / ((self.n * self.n) as f64 * (self.l * self.l) as f64)
    }

    /// Fails unless `N^-2 L^-2 <= eps`.
    pub fn require_resolution(&self) -> Result<()> {
        if self.resolution() <= self.eps * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(domain(format!("N^-2 L^-2 = {} exceeds eps = {}", self.resolution(), self.eps)))
        }
    }

    /// `N^-2s L^-2s`.
    pub fn fine_scale(&self) -> f64 {
        crate::math::pow(self.resolution(), self.s as f64)
    }

    /// Parameters for nested sub-networks: `(N^2, L^2)` with the same `s` and `eps`.
    pub fn squared(&self) -> Self {
        Self { n: self.n * self.n, l: self.l * self.l, ..*self }
    }

    pub fn describe(&self) -> String {
        format!("N={} L={} s={} eps={}", self.n, self.l, self.s, self.eps)
    }
}
