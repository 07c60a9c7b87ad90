//! Exponential, reciprocal, root and the diffusion schedule as networks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::basic::{build_clamp, build_mid, log2, piecewise_linear, point_fit_budget};
use super::cert::{measure, Bound, Draft, SizeBudget};
use super::network::ReluNetwork;
use super::poly::{power_series_net, product_chain, product_net, saturating_depth};
use super::step::{staircase, StepOutput};
use super::{ApproxParams, ErrorCertificate};
use crate::error::{domain, Error, Result};
use crate::math::{exp, linspace, log, logspace, pow};

/// Budget shared by the exponential and root constructions.
pub(crate) fn exp_budget(p: &ApproxParams) -> SizeBudget {
    let (n, l, s) = (p.n as f64, p.l as f64, p.s as f64);
    SizeBudget {
        width: libm::floor(48.0 * s * s * (n + 1.0) * log2(8.0 * n)) as usize,
        depth: libm::floor(18.0 * s * s * (l + 2.0) * log2(4.0 * l)) as usize + 2,
    }
}

fn exp_bound(r: f64, p: &ApproxParams) -> f64 {
    (45.0 * p.s as f64 + pow(r, p.s as f64) + 4.0) * p.fine_scale()
}

/// Product resolution for internal products.
fn inner_m(p: &ApproxParams) -> usize {
    p.n.max(2)
}

/// `exp(-x)` on `[0, R]`, inputs clamped to that range.
///
/// With `K = N^2 L^2` cells of width `H`, the cell index is split as
/// `K2 J + j`; `exp(-x) = A(J) B(j) exp(-x~)` with `A`, `B` exact lookups at
/// the integers and `exp(-x~)`, `x~ = x - H(K2 J + j)` in `[0, H]`, replaced by
/// its order-`s` Taylor polynomial. The staircase is wrong only inside gaps of
/// width `δ`; the median of the copies at `x - δ`, `x`, `x + δ` discards the
/// one copy that can land in a gap.
pub(crate) fn exp_net(r: f64, p: &ApproxParams) -> Result<ReluNetwork> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("exp range must be positive, got {r}")));
    }
    let k = p.n * p.n * p.l * p.l;
    if r > k as f64 * (1.0 + 1e-12) {
        return Err(domain(format!("exp range R = {r} exceeds N^2 L^2 = {k}")));
    }
    let h = r / k as f64;
    let delta = (h / 3.0).min(p.fine_scale());
    let st = staircase(0.0, r, k, delta, p.n, StepOutput::PartsAndInput);
    let (k1, k2) = (st.coarse, st.fine);
    let lookup_width = point_fit_budget(p).width;
    let knots = |count: usize| (0..count).map(|i| i as f64).collect::<Vec<_>>();
    let a_vals: Vec<f64> = (0..k1).map(|i| exp(-((i * k2) as f64) * h)).collect();
    let b_vals: Vec<f64> = (0..k2).map(|j| exp(-(j as f64) * h)).collect();
    let pick = |i: usize| ReluNetwork::affine(&[vec![(i, 1.0)]], vec![0.0], 3);
    let a_net = ReluNetwork::compose(&piecewise_linear(&knots(k1), &a_vals, lookup_width)?, &pick(0))?;
    let b_net = ReluNetwork::compose(&piecewise_linear(&knots(k2), &b_vals, lookup_width)?, &pick(1))?;

    let m = inner_m(p);
    let depth = saturating_depth(m);
    let rho = h + delta;
    let mut coeffs = Vec::with_capacity(p.s);
    let mut c = 1.0;
    for i in 0..p.s {
        if i > 0 {
            c /= -(i as f64);
        }
        coeffs.push(c);
    }
    let taylor = power_series_net(&coeffs, rho, m, depth);
    let residual = ReluNetwork::affine(&[vec![(0, -h * k2 as f64), (1, -h), (2, 1.0)]], vec![0.0], 3);
    let taylor = ReluNetwork::compose(&taylor, &ReluNetwork::compose(&build_clamp(-rho, rho)?, &residual)?)?;

    let lookups = ReluNetwork::parallel_all(&[&a_net, &b_net, &taylor])?;
    let unit = (-1e-6, 1.0 + 1e-6);
    let ab = ReluNetwork::stack_all(&[&product_net(unit, unit, m, depth), &ReluNetwork::identity(1)])?;
    let abt = product_net(unit, (-0.01, 1.0 + 2.0 * rho + 0.01), m, depth);

    let mut psi = ReluNetwork::compose(&st.net, &build_clamp(0.0, r)?)?;
    for stage in [&lookups, &ab, &abt] {
        psi = ReluNetwork::compose(stage, &psi)?;
    }
    let copies: Vec<ReluNetwork> = [-delta, 0.0, delta]
        .iter()
        .map(|&shift| ReluNetwork::affine_wrap(&[vec![(0, 1.0)]], vec![shift], 1, &psi))
        .collect::<Result<_>>()?;
    let three = ReluNetwork::parallel_all(&copies.iter().collect::<Vec<_>>())?;
    ReluNetwork::compose(&build_mid(), &three)
}

/// `exp(-x)` on `[0, R]`; bound `(45s + R^s + 4) N^{-2s} L^{-2s}`.
pub fn build_exp(r: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    let net = exp_net(r, params)?;
    let grid = linspace(0.0, r, 4001).into_iter().map(|x| vec![x]);
    let measurement = measure(&net, grid, |x, out| out[0] = exp(-x[0]));
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "exp",
            params: format!("R={r} {}", params.describe()),
            grid: format!("uniform 4001 on [0, {r}]"),
            measurement,
            bound: Bound::Closed(exp_bound(r, params)),
            budget: Some(exp_budget(params)),
            formula: "(45s + R^s + 4) N^-2s L^-2s",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// `1/x` for `x` clamped to `[a, b]`, accurate to `tol` there.
///
/// Newton's iteration `y <- y (2 - x y)` squares the relative error
/// `1 - x y` each round. Starting from `2/(a+b)` the first step is affine in
/// `x`; every later step uses two product networks.
pub(crate) fn reciprocal_net(a: f64, b: f64, tol: f64, m: usize) -> Result<ReluNetwork> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(domain(format!("reciprocal needs 0 < a < b, got [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(domain("reciprocal tolerance must be positive"));
    }
    let y0 = 2.0 / (a + b);
    let q = (b - a) / (b + a);
    // Error after `r` rounds past the affine one is q^(2^(r+1)) / a.
    let target = (0.5 * tol * a).min(0.5);
    let mut rounds = 0usize;
    let mut err = q * q;
    while err > target {
        err *= err;
        rounds += 1;
        if rounds > 64 {
            return Err(Error::Construction("reciprocal iteration count exceeds 64".into()));
        }
    }
    let depth = saturating_depth(m);
    let clamp = build_clamp(a, b)?;
    // (x) -> (x, y1)
    let first = ReluNetwork::affine(&[vec![(0, 1.0)], vec![(0, -y0 * y0)]], vec![0.0, 2.0 * y0], 1);
    let mut net = ReluNetwork::compose(&first, &clamp)?;
    let x_range = (a * (1.0 - 1e-9), b * (1.0 + 1e-9));
    let y_range = (-1e-9 / a, (1.0 + 1e-6) / a);
    let select = |rows: &[Vec<(usize, f64)>], bias: Vec<f64>, dim: usize| ReluNetwork::affine(rows, bias, dim);
    for _ in 0..rounds {
        // (x, y) -> (x, y, x y)
        let xy = product_net(x_range, y_range, m, depth);
        let stage1 = ReluNetwork::parallel_all(&[&ReluNetwork::identity(2), &xy])?;
        // (x, y, p) -> (x, y (2 - p))
        let upd = product_net(y_range, (-1e-6, 2.0 + 1e-6), m, depth);
        let upd = ReluNetwork::compose(&upd, &select(&[vec![(1, 1.0)], vec![(2, -1.0)]], vec![0.0, 2.0], 3))?;
        let keep_x = select(&[vec![(0, 1.0)]], vec![0.0], 3);
        let stage2 = ReluNetwork::parallel_all(&[&keep_x, &upd])?;
        net = ReluNetwork::compose(&stage2, &ReluNetwork::compose(&stage1, &net)?)?;
    }
    ReluNetwork::then_affine(&net, &[vec![(1, 1.0)]], vec![0.0])
}

/// `1/x` on `[a, b]` with accuracy `tol`; the size bound is only known up to
/// constants, so the certificate is fitted against `log^2((b/a)/tol)`.
pub fn build_reciprocal_on(a: f64, b: f64, tol: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    let net = reciprocal_net(a, b, tol, inner_m(params))?;
    let grid = logspace(a, b, 4001).into_iter().map(|x| vec![x]);
    let measurement = measure(&net, grid, |x, out| out[0] = 1.0 / x[0]);
    if measurement.sup > tol {
        return Err(Error::Certificate(format!("reciprocal on [{a}, {b}]: error {} above {tol}", measurement.sup)));
    }
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "reciprocal",
            params: format!("a={a} b={b} tol={tol} {}", params.describe()),
            grid: format!("log-uniform 4001 on [{a}, {b}]"),
            measurement,
            bound: Bound::Closed(tol),
            budget: None,
            formula: "tol; width ~ log^3, depth ~ log^2 (fitted)",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// `1/x` on `[ε, 1/ε]`: error at most `ε^s` there, and by clamping
/// `|φ(x') - 1/x| <= ε + |x' - x| / ε^2` for every real `x'`.
pub fn build_reciprocal(eps: f64, s: usize) -> Result<(ReluNetwork, ErrorCertificate)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let params = ApproxParams::new(2, 1, s.max(1), eps)?;
    build_reciprocal_on(eps, 1.0 / eps, pow(eps, s.max(1) as f64), &params)
}

/// Knots of a piecewise-linear interpolant of the concave `x^{1/k}` on
/// `[0, R]` with error at most `tol`, placed greedily from the left.
fn root_knots(k: usize, r: f64, tol: f64) -> Vec<f64> {
    let kf = k as f64;
    let f = |x: f64| pow(x, 1.0 / kf);
    // Largest gap between f and its chord on [u, v]; the maximizer solves f'(x) = slope.
    let chord_error = |u: f64, v: f64| {
        let slope = (f(v) - f(u)) / (v - u);
        let x = pow(kf * slope, kf / (1.0 - kf)).clamp(u, v);
        f(x) - f(u) - slope * (x - u)
    };
    let mut knots = vec![0.0];
    let mut u = 0.0;
    while u < r {
        if chord_error(u, r) <= tol {
            knots.push(r);
            break;
        }
        let (mut lo, mut hi) = (u, r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if chord_error(u, mid) <= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= u {
            lo = hi;
        }
        knots.push(lo);
        u = lo;
    }
    knots
}

/// `x^{1/k}` on `[0, R]`; bound `(45s + 5) R^{1/k} N^{-2s} L^{-2s}`, realized
/// as a graded piecewise-linear interpolant with half that error.
pub fn build_root(k: usize, r: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    if k == 0 {
        return Err(domain("root order must be at least 1"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("root range must be positive, got {r}")));
    }
    let claimed = (45.0 * params.s as f64 + 5.0) * pow(r, 1.0 / k as f64) * params.fine_scale();
    let budget = exp_budget(params);
    let knots = if k == 1 { vec![0.0, r] } else { root_knots(k, r, 0.5 * claimed) };
    let values: Vec<f64> = knots.iter().map(|x| pow(*x, 1.0 / k as f64)).collect();
    let net = piecewise_linear(&knots, &values, budget.width)?;
    let mut grid = linspace(0.0, r, 4001);
    grid.extend(logspace(r * 1e-12, r, 2001));
    let measurement = measure(&net, grid.into_iter().map(|x| vec![x]), |x, out| out[0] = pow(x[0], 1.0 / k as f64));
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "root",
            params: format!("k={k} R={r} {}", params.describe()),
            grid: format!("uniform 4001 plus log-uniform 2001 on [0, {r}]"),
            measurement,
            bound: Bound::Closed(claimed),
            budget: Some(budget),
            formula: "(45s + 5) R^(1/k) N^-2s L^-2s",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// Networks for `m_t = e^{-t}`, `σ_t^2 = 1 - e^{-2t}` and `σ_t^{-2k}` on `t >= t0`.
#[derive(Debug, Clone)]
pub struct ScheduleNets {
    pub m: ReluNetwork,
    pub sigma2: ReluNetwork,
    pub inv_sigma2k: ReluNetwork,
    pub certificates: [ErrorCertificate; 3],
}

/// Horizon past which `m_t < ε^s` and the networks hold their value.
pub(crate) fn schedule_horizon(p: &ApproxParams) -> f64 {
    p.s as f64 * log(1.0 / p.eps)
}

pub(crate) fn m_net(p: &ApproxParams) -> Result<ReluNetwork> {
    exp_net(schedule_horizon(p), p)
}

pub(crate) fn sigma2_net(p: &ApproxParams) -> Result<ReluNetwork> {
    let e = exp_net(2.0 * schedule_horizon(p), p)?;
    let doubled = ReluNetwork::affine(&[vec![(0, 2.0)]], vec![0.0], 1);
    let e2 = ReluNetwork::compose(&e, &doubled)?;
    ReluNetwork::then_affine(&e2, &[vec![(0, -1.0)]], vec![1.0])
}

/// `σ_t^{-2k}` for `t >= t0`, through `(σ_t^2)^k` and a reciprocal on `[σ_{t0}^{2k}, 1]`.
pub(crate) fn inv_sigma2k_net(p: &ApproxParams, t0: f64, k: usize, tol: f64) -> Result<ReluNetwork> {
    let s2 = sigma2_net(p)?;
    let m = inner_m(p);
    let power = if k == 1 {
        s2
    } else {
        let dup = ReluNetwork::affine(&vec![vec![(0, 1.0)]; k], vec![0.0; k], 1);
        let chain = product_chain(&vec![(-1e-6, 1.0 + 1e-6); k], m, saturating_depth(m));
        ReluNetwork::compose(&ReluNetwork::compose(&chain, &dup)?, &s2)?
    };
    let lo = pow(crate::schedule::noise_var(t0), k as f64) * (1.0 - 1e-3);
    let rec = reciprocal_net(lo, 1.0 + 1e-6, tol, m)?;
    ReluNetwork::compose(&rec, &power)
}

pub fn build_schedule_nets(params: &ApproxParams, t0: f64, k: usize) -> Result<ScheduleNets> {
    if !(params.eps <= t0 && t0 <= 0.5) {
        return Err(domain(format!("schedule nets need eps <= t0 <= 1/2, got eps={} t0={t0}", params.eps)));
    }
    if k == 0 {
        return Err(domain("power k must be positive"));
    }
    let horizon = schedule_horizon(params);
    let rate = pow(params.eps, params.s as f64);
    let m = m_net(params)?;
    let sigma2 = sigma2_net(params)?;
    let inv = inv_sigma2k_net(params, t0, k, 1e-3 * rate)?;
    let times: Vec<f64> = linspace(t0, horizon, 2001);
    let grid = || times.iter().map(|t| vec![*t]);
    let describe = format!("{} t0={t0} k={k}", params.describe());
    let grid_desc = format!("uniform 2001 on [{t0}, {horizon}]");
    let cert_m = ErrorCertificate::issue(
        Draft {
            builder: "schedule_m",
            params: describe.clone(),
            grid: grid_desc.clone(),
            measurement: measure(&m, grid(), |x, out| out[0] = exp(-x[0])),
            bound: Bound::Closed(exp_bound(horizon, params)),
            budget: Some(exp_budget(params)),
            formula: "(45s + R^s + 4) N^-2s L^-2s, R = s log(1/eps)",
            notes: Vec::new(),
        },
        &m,
    )?;
    let cert_s = ErrorCertificate::issue(
        Draft {
            builder: "schedule_sigma2",
            params: describe.clone(),
            grid: grid_desc.clone(),
            measurement: measure(&sigma2, grid(), |x, out| out[0] = -libm::expm1(-2.0 * x[0])),
            bound: Bound::Closed(exp_bound(2.0 * horizon, params)),
            budget: Some(exp_budget(params)),
            formula: "(45s + R^s + 4) N^-2s L^-2s, R = 2 s log(1/eps)",
            notes: Vec::new(),
        },
        &sigma2,
    )?;
    let cert_i = ErrorCertificate::issue(
        Draft {
            builder: "schedule_inv_sigma2k",
            params: describe,
            grid: grid_desc,
            measurement: measure(&inv, grid(), |x, out| out[0] = pow(-libm::expm1(-2.0 * x[0]), -(k as f64))),
            bound: Bound::Fitted(rate),
            budget: None,
            formula: "C eps^s (fitted)",
            notes: Vec::new(),
        },
        &inv,
    )?;
    Ok(ScheduleNets { m, sigma2, inv_sigma2k: inv, certificates: [cert_m, cert_s, cert_i] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_reaches_tolerance() {
        let net = reciprocal_net(0.01, 100.0, 1e-6, 4).unwrap();
        for x in logspace(0.01, 100.0, 301) {
            let got = net.eval(&[x])[0];
            assert!((got - 1.0 / x).abs() <= 1e-6, "{x}: {got}");
        }
        assert!((net.eval(&[1e-5])[0] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn root_knots_respect_tolerance() {
        let knots = root_knots(3, 8.0, 1e-3);
        assert_eq!(knots[0], 0.0);
        assert_eq!(*knots.last().unwrap(), 8.0);
        assert!(knots.len() < 200);
    }
}
