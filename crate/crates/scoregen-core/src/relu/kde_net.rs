//! Networks for the kernel mean and the regularized kernel score.
//!
//! Both share one trunk. From `(y, t)` it computes `m_t`, `σ_t^{-2}` and the
//! clamped `y`. Per sample it then forms the exponent
//! `h_i = |y - m_t x_i|^2 / (2 σ_t^2)` from `y_j^2`, `m_t y_j`, `m_t^2` and
//! `σ_t^{-2}`, and passes it through its own exponential network.
//! Expanding `exp(-h)` around one shared cell for all samples would be
//! cheaper, but that Taylor step is only accurate while the `h_i` stay close
//! to each other, which fails as soon as the samples spread out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::basic::{build_clamp, build_min, identity_gadget};
use super::cert::{measure, tensor_grid, Bound, Draft};
use super::network::ReluNetwork;
use super::poly::{product_net, saturating_depth, square_net};
use super::special::{exp_net, inv_sigma2k_net, m_net, schedule_horizon};
use super::{ApproxParams, ErrorCertificate};
use crate::error::{domain, Error, Result};
use crate::kde::KdeScoreEstimator;
use crate::math::{log, logspace, pow, sqrt};
use crate::schedule::{noise_scale, noise_var, DiffusionSchedule};

/// Parameter count above which the composed networks are refused.
pub const DEFAULT_PARAM_CAP: usize = 10_000_000;

/// Ranges and radii the trunk is built for.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KdeNetLayout {
    pub n: usize,
    pub d: usize,
    /// Tail parameter, raised when the samples would violate the bounded-support assumption.
    pub alpha: f64,
    /// Largest absolute sample coordinate.
    pub sample_bound: f64,
    /// Outside `|y|_inf <= ball + window` the kernel mean network outputs 0.
    pub ball: f64,
    pub window: f64,
    /// Times beyond this are treated as this time.
    pub horizon: f64,
    /// Cap on the exponent `h_i`.
    pub exponent_cap: f64,
    /// Upper end of `|y - m x_i|^2`.
    pub residual_cap: f64,
    /// `1 / σ_{t0}^2` with slack.
    pub inv_var_cap: f64,
    pub t0: f64,
}

impl KdeNetLayout {
    pub fn new(samples: &[Vec<f64>], params: &ApproxParams, schedule: &DiffusionSchedule) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        params.require_resolution()?;
        let d = schedule.d;
        if let Some(bad) = samples.iter().find(|x| x.len() != d) {
            return Err(Error::Dimension { expected: d, found: bad.len() });
        }
        let log_inv = log(1.0 / params.eps);
        let s = params.s as f64;
        let sample_bound = samples.iter().flat_map(|x| x.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        let alpha = schedule.alpha.max(sample_bound * sample_bound / (2.0 * s * log_inv));
        let ball = 2.0 * sqrt(2.0 * alpha * s * log_inv);
        let window = 0.05 * ball;
        let clamp = ball + window;
        let residual_cap = d as f64 * (clamp + sample_bound) * (clamp + sample_bound);
        Ok(Self {
            n: samples.len(),
            d,
            alpha,
            sample_bound,
            ball,
            window,
            horizon: schedule_horizon(params),
            exponent_cap: 2.0 * s * log_inv,
            residual_cap,
            inv_var_cap: (1.0 + 1e-3) / noise_var(schedule.t0),
            t0: schedule.t0,
        })
    }

    fn clamp(&self) -> f64 {
        self.ball + self.window
    }
}

fn pick(dim: usize, idx: &[usize]) -> ReluNetwork {
    let rows: Vec<Vec<(usize, f64)>> = idx.iter().map(|&i| vec![(i, 1.0)]).collect();
    ReluNetwork::affine(&rows, vec![0.0; idx.len()], dim)
}

fn after(f: &ReluNetwork, g: &ReluNetwork) -> Result<ReluNetwork> {
    ReluNetwork::compose(f, g)
}

fn parallel(nets: &[ReluNetwork]) -> Result<ReluNetwork> {
    ReluNetwork::parallel_all(&nets.iter().collect::<Vec<_>>())
}

const UNIT: (f64, f64) = (-1e-6, 1.0 + 1e-6);

/// Trunk outputs: `g_1..g_n`, then `m`, `σ^{-2}`, `y_c` (d entries) when
/// `carry` is set, else the window value.
fn trunk(samples: &[Vec<f64>], layout: &KdeNetLayout, params: &ApproxParams, cap: usize, carry: bool) -> Result<ReluNetwork> {
    let (n, d) = (layout.n, layout.d);
    let inner = params.squared();
    let m = inner.n.max(2);
    let depth = saturating_depth(m);
    let b = layout.clamp();

    // Stage 0: (y, t) -> (y_c, m_t, inv_var)
    let mut front: Vec<ReluNetwork> = Vec::new();
    for j in 0..d {
        front.push(after(&build_clamp(-b, b)?, &pick(d + 1, &[j]))?);
    }
    front.push(after(&m_net(&inner)?, &pick(d + 1, &[d]))?);
    front.push(after(&inv_sigma2k_net(&inner, layout.t0, 1, 1e-10)?, &pick(d + 1, &[d]))?);
    let stage0 = parallel(&front)?;

    // Stage 1: -> (y_c^2, m y_c, m^2, m, inv_var, y_c)
    let w0 = d + 2;
    let mut feats: Vec<ReluNetwork> = Vec::new();
    for j in 0..d {
        feats.push(after(&square_net(-b, b, m, depth), &pick(w0, &[j]))?);
    }
    for j in 0..d {
        feats.push(after(&product_net(UNIT, (-b, b), m, depth), &pick(w0, &[d, j]))?);
    }
    feats.push(after(&square_net(UNIT.0, UNIT.1, m, depth), &pick(w0, &[d]))?);
    let mut tail: Vec<usize> = vec![d, d + 1];
    tail.extend(0..d);
    feats.push(pick(w0, &tail));
    let stage1 = parallel(&feats)?;

    // Stage 2: -> (u_1..u_n, m, inv_var, y_c), u_i = |y_c - m x_i|^2 clamped to [0, cap].
    let w1 = 3 * d + 3;
    let mut resid: Vec<ReluNetwork> = Vec::new();
    let clamp_u = build_clamp(0.0, layout.residual_cap)?;
    for x in samples {
        let mut row = Vec::with_capacity(2 * d + 1);
        let mut m2 = 0.0;
        for j in 0..d {
            row.push((j, 1.0));
            row.push((d + j, -2.0 * x[j]));
            m2 += x[j] * x[j];
        }
        row.push((2 * d, m2));
        let u = ReluNetwork::affine(&[row], vec![0.0], w1);
        resid.push(after(&clamp_u, &u)?);
    }
    resid.push(pick(w1, &(2 * d + 1..3 * d + 3).collect::<Vec<_>>()));
    let stage2 = parallel(&resid)?;

    // Stage 3: -> (g_1..g_n, ...), g_i = exp(-inv_var u_i / 2).
    let w2 = n + 2 + d;
    let expo = exp_net(layout.exponent_cap, &inner)?;
    let prod = product_net((1.0 - 1e-6, layout.inv_var_cap), (-1e-6, layout.residual_cap * (1.0 + 1e-6)), m, depth);
    let half = ReluNetwork::then_affine(&prod, &[vec![(0, 0.5)]], vec![0.0])?;
    let kernel = after(&expo, &half)?;
    let estimate = n.saturating_mul(kernel.param_count());
    if estimate > cap {
        return Err(Error::ParamCap { params: estimate, cap });
    }
    let mut last: Vec<ReluNetwork> = Vec::with_capacity(n + 1);
    for i in 0..n {
        last.push(after(&kernel, &pick(w2, &[n + 1, i]))?);
    }
    if carry {
        last.push(pick(w2, &(n..n + 2 + d).collect::<Vec<_>>()));
    } else {
        last.push(after(&window_net(layout)?, &pick(w2, &(n + 2..n + 2 + d).collect::<Vec<_>>()))?);
    }
    let stage3 = parallel(&last)?;

    let mut net = stage0;
    for s in [&stage1, &stage2, &stage3] {
        net = after(s, &net)?;
    }
    net.check_cap(cap)?;
    Ok(net)
}

/// `min_j clamp((B + ω - |y_j|)/ω, 0, 1)`.
fn window_net(layout: &KdeNetLayout) -> Result<ReluNetwork> {
    let d = layout.d;
    let edge = layout.clamp();
    let w = layout.window;
    let mut parts = Vec::with_capacity(d);
    for j in 0..d {
        // ReLU(y) + ReLU(-y) = |y|, then the clamped ramp.
        let abs = ReluNetwork::affine_wrap(&[vec![(0, 1.0)]], vec![0.0], d, &super::basic::build_abs())?;
        let abs = after(&abs, &pick(d, &[j]))?;
        let ramp = ReluNetwork::affine(&[vec![(0, -1.0 / w)]], vec![edge / w], 1);
        parts.push(after(&build_clamp(0.0, 1.0)?, &after(&ramp, &abs)?)?);
    }
    let mut net = parallel(&parts)?;
    let mut width = d;
    while width > 1 {
        // Pairwise minima, carrying an odd one out.
        let mut next: Vec<ReluNetwork> = Vec::new();
        for k in (0..width - 1).step_by(2) {
            next.push(after(&build_min(), &pick(width, &[k, k + 1]))?);
        }
        if width % 2 == 1 {
            next.push(pick(width, &[width - 1]));
        }
        let level = parallel(&next)?;
        width = level.output_dim();
        net = after(&level, &net)?;
    }
    Ok(net)
}

fn check_gate(samples: &[Vec<f64>], params: &ApproxParams, schedule: &DiffusionSchedule) -> Result<()> {
    if schedule.d > 2 || params.s > 3 || samples.len() > 64 || params.n > 8 || params.l > 2 {
        return Err(domain(format!(
            "composed networks are limited to d <= 2, s <= 3, n <= 64, N <= 8, L <= 2 (got d={} s={} n={} N={} L={})",
            schedule.d,
            params.s,
            samples.len(),
            params.n,
            params.l
        )));
    }
    Ok(())
}

/// Evaluation grid: `y` over the clamped box plus one unit, `t` log-uniform.
fn cert_grid(layout: &KdeNetLayout, schedule: &DiffusionSchedule) -> Vec<Vec<f64>> {
    let edge = layout.clamp() + 1.0;
    let per = if layout.d == 1 { 161 } else { 31 };
    let ys = tensor_grid(&vec![(-edge, edge); layout.d], per);
    let t_hi = layout.horizon.min(schedule.horizon).max(layout.t0 * 1.5);
    let ts = logspace(layout.t0, t_hi, 9);
    let mut out = Vec::with_capacity(ys.len() * ts.len());
    for t in &ts {
        for y in &ys {
            let mut p = y.clone();
            p.push(*t);
            out.push(p);
        }
    }
    out
}

/// Network for the kernel mean `(1/n) sum_i exp(-|y - m_t x_i|^2 / (2 σ_t^2))`
/// on `(y, t)`, with output in `[0, 1]` and exactly 0 for
/// `|y|_inf >= ball + window`.
pub fn build_kde_net(samples: &[Vec<f64>], params: &ApproxParams, schedule: &DiffusionSchedule) -> Result<(ReluNetwork, ErrorCertificate)> {
    build_kde_net_capped(samples, params, schedule, DEFAULT_PARAM_CAP)
}

pub fn build_kde_net_capped(
    samples: &[Vec<f64>],
    params: &ApproxParams,
    schedule: &DiffusionSchedule,
    cap: usize,
) -> Result<(ReluNetwork, ErrorCertificate)> {
    check_gate(samples, params, schedule)?;
    let layout = KdeNetLayout::new(samples, params, schedule)?;
    let kde = KdeScoreEstimator::new(samples, *schedule)?;
    let n = layout.n;
    let trunk = trunk(samples, &layout, params, cap, false)?;
    let mean: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0 / n as f64)).collect();
    let head = ReluNetwork::affine(&[mean, vec![(n, 1.0)]], vec![0.0, 0.0], n + 1);
    let head = after(&identity_gadget(0.0), &after(&build_min(), &head)?)?;
    let net = after(&head, &trunk)?;
    net.check_cap(cap)?;
    let measurement = measure(&net, cert_grid(&layout, schedule), |p, out| {
        let (y, t) = p.split_at(layout.d);
        out[0] = kde.kernel_mean(t[0], y).unwrap_or(f64::NAN);
    });
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "kde_net",
            params: format!("n={n} d={} alpha={} {}", layout.d, layout.alpha, params.describe()),
            grid: format!("y box +-{} x 9 log-spaced t", layout.clamp() + 1.0),
            measurement,
            bound: Bound::Fitted(pow(params.eps, params.s as f64)),
            budget: None,
            formula: "C eps^s (fitted)",
            notes: vec![("ball".into(), layout.ball), ("window".into(), layout.window)],
        },
        &net,
    )?;
    Ok((net, cert))
}

/// Network for the regularized kernel score
/// `σ_t^{-2} (m_t f_x - y f) / max(f, e^{-1}/n)`, where `f` is the kernel
/// mean and `f_x` the kernel-weighted sample mean.
pub fn build_score_net(samples: &[Vec<f64>], params: &ApproxParams, schedule: &DiffusionSchedule) -> Result<(ReluNetwork, ErrorCertificate)> {
    build_score_net_capped(samples, params, schedule, DEFAULT_PARAM_CAP)
}

pub fn build_score_net_capped(
    samples: &[Vec<f64>],
    params: &ApproxParams,
    schedule: &DiffusionSchedule,
    cap: usize,
) -> Result<(ReluNetwork, ErrorCertificate)> {
    check_gate(samples, params, schedule)?;
    let layout = KdeNetLayout::new(samples, params, schedule)?;
    let n = layout.n;
    let d = layout.d;
    let limit = schedule.t0.min(pow(n as f64, -1.0 / params.s as f64));
    if params.eps > limit * (1.0 + 1e-12) {
        return Err(domain(format!("eps = {} must not exceed min(t0, n^(-1/s)) = {limit}", params.eps)));
    }
    let kde = KdeScoreEstimator::new(samples, *schedule)?;
    let trunk = trunk(samples, &layout, params, cap, true)?;
    let m = params.squared().n.max(2);
    let depth = saturating_depth(m);
    let b = layout.clamp();
    let x_max = layout.sample_bound.max(1e-12);
    let floor = crate::math::exp(-1.0) / n as f64;

    // Input: g (n), m, inv_var, y_c (d).
    let w = n + 2 + d;
    let f1: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0 / n as f64)).collect();
    let mut stage_a: Vec<ReluNetwork> = Vec::new();
    for j in 0..d {
        let fx: Vec<(usize, f64)> = samples.iter().enumerate().map(|(i, x)| (i, x[j] / n as f64)).collect();
        let args = ReluNetwork::affine(&[vec![(n, 1.0)], fx], vec![0.0, 0.0], w);
        stage_a.push(after(&product_net(UNIT, (-x_max, x_max), m, depth), &args)?);
    }
    for j in 0..d {
        let args = ReluNetwork::affine(&[vec![(n + 2 + j, 1.0)], f1.clone()], vec![0.0, 0.0], w);
        stage_a.push(after(&product_net((-b, b), UNIT, m, depth), &args)?);
    }
    // max(f, floor) = floor + ReLU(f - floor), then its reciprocal.
    let floored = {
        let shifted = ReluNetwork::affine(core::slice::from_ref(&f1), vec![-floor], w);
        after(&identity_gadget(0.0), &shifted)?
    };
    let floored = ReluNetwork::then_affine(&floored, &[vec![(0, 1.0)]], vec![floor])?;
    let rec = super::special::reciprocal_net(floor, 1.0 + 1e-3, 1e-10, m)?;
    stage_a.push(after(&rec, &floored)?);
    stage_a.push(pick(w, &[n + 1]));
    let stage_a = parallel(&stage_a)?;

    // (P1 (d), P2 (d), rec, inv) -> (q (d), inv)
    let wa = 2 * d + 2;
    let v_max = x_max + b;
    let rec_range = (1.0 / (1.0 + 2e-3), (1.0 + 1e-6) / floor);
    let mut stage_b: Vec<ReluNetwork> = Vec::new();
    for j in 0..d {
        let args = ReluNetwork::affine(&[vec![(j, 1.0), (d + j, -1.0)], vec![(2 * d, 1.0)]], vec![0.0, 0.0], wa);
        stage_b.push(after(&product_net((-v_max, v_max), rec_range, m, depth), &args)?);
    }
    stage_b.push(pick(wa, &[2 * d + 1]));
    let stage_b = parallel(&stage_b)?;

    let q_max = v_max * rec_range.1;
    let mut stage_c: Vec<ReluNetwork> = Vec::new();
    for j in 0..d {
        stage_c.push(after(&product_net((1.0 - 1e-6, layout.inv_var_cap), (-q_max, q_max), m, depth), &pick(d + 1, &[d, j]))?);
    }
    let stage_c = parallel(&stage_c)?;

    let mut net = trunk;
    for s in [&stage_a, &stage_b, &stage_c] {
        net = after(s, &net)?;
    }
    net.check_cap(cap)?;

    let mut ratio = 0.0f64;
    let norm = sqrt(log(n as f64).max(1.0));
    let measurement = measure(&net, cert_grid(&layout, schedule), |p, out| {
        let (y, t) = p.split_at(d);
        match kde.regularized_score(t[0], y) {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.fill(f64::NAN),
        }
    });
    let mut scratch = super::network::Scratch::default();
    for p in cert_grid(&layout, schedule) {
        let out = net.eval_with(&p, &mut scratch);
        ratio = ratio.max(crate::math::norm2(out) * noise_scale(p[d]) / norm);
    }
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "score_net",
            params: format!("n={n} d={d} alpha={} {}", layout.alpha, params.describe()),
            grid: format!("y box +-{} x 9 log-spaced t", b + 1.0),
            measurement,
            bound: Bound::Fitted(pow(params.eps, params.s as f64)),
            budget: None,
            formula: "C eps^s (fitted)",
            notes: vec![("sup_norm_sigma_over_sqrt_log_n".into(), ratio)],
        },
        &net,
    )?;
    Ok((net, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp;

    /// The shared-cell surrogate: expand every `exp(-h_i)` around the first
    /// sample's exponent. Accurate when the `h_i` are close, not otherwise.
    fn shared_cell_surrogate(h: &[f64], order: usize) -> f64 {
        let center = h[0];
        let mut total = 0.0;
        for &hi in h {
            let dx = hi - center;
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 0..order {
                if k > 0 {
                    term *= -dx / k as f64;
                }
                sum += term;
            }
            total += exp(-center) * sum;
        }
        total / h.len() as f64
    }

    #[test]
    fn shared_cell_expansion_breaks_for_spread_samples() {
        let close = [1.0, 1.01];
        let exact_close = (exp(-1.0) + exp(-1.01)) / 2.0;
        assert!((shared_cell_surrogate(&close, 2) - exact_close).abs() < 1e-4);
        let spread = [0.0, 4.0];
        let exact_spread = (1.0 + exp(-4.0)) / 2.0;
        assert!((shared_cell_surrogate(&spread, 2) - exact_spread).abs() > 1.0);
    }

    #[test]
    fn trunk_layout_inflates_alpha_for_wide_samples() {
        let params = ApproxParams::tight(4, 2, 2).unwrap();
        let schedule = DiffusionSchedule::new(0.1, 5.0, 1, 1.0).unwrap();
        let layout = KdeNetLayout::new(&[vec![10.0]], &params, &schedule).unwrap();
        assert!(layout.alpha > 1.0);
        assert!(layout.ball >= 20.0 - 1e-9);
    }
}
