//! Sawtooth squares, products and monomials.
//!
//! With `M` grid cells on `[0,1]`, the interpolant `I` of `z^2` and the zigzag
//! `T` (0 at even grid points, 1 at odd ones) satisfy
//! `z^2 = I(z) - T(z)/M^2 + T(z)^2/M^2`. Unrolling `L` times and replacing the
//! last square by its chord gives an error of at most `M^{-2L}/4`, using one
//! layer of `M + 1` units per level.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::cert::{measure, tensor_grid, Bound, Draft, SizeBudget};
use super::network::{Layer, ReluNetwork};
use super::{ApproxParams, ErrorCertificate};
use crate::error::{domain, Result};
use crate::math::{log, pow};

/// Expression `sum coef * input + constant`.
pub(crate) type Affine = (Vec<(usize, f64)>, f64);

/// Slope-change coefficients of the interpolant through `(j/M, g_j)`, j = 0..=M,
/// held constant to the right of 1.
fn grid_coeffs(g: &[f64]) -> Vec<f64> {
    let m = (g.len() - 1) as f64;
    let slope = |j: usize| if j + 1 < g.len() { m * (g[j + 1] - g[j]) } else { 0.0 };
    (0..g.len()).map(|j| slope(j) - if j > 0 { slope(j - 1) } else { 0.0 }).collect()
}

struct ChainCoeffs {
    p: Vec<f64>,
    t: Vec<f64>,
    clamp: Vec<f64>,
}

impl ChainCoeffs {
    fn new(m: usize) -> Self {
        let mf = m as f64;
        let t: Vec<f64> = (0..=m).map(|j| (j % 2) as f64).collect();
        let p: Vec<f64> = (0..=m).map(|j| (j as f64 / mf) * (j as f64 / mf) - t[j] / (mf * mf)).collect();
        let clamp: Vec<f64> = (0..=m).map(|j| j as f64 / mf).collect();
        Self { p: grid_coeffs(&p), t: grid_coeffs(&t), clamp: grid_coeffs(&clamp) }
    }
}

/// For each affine input expression `w_k`, outputs `Q_k ≈ clamp(w_k)^2`
/// followed by `clamp(w_k)` (exact), with clamping to `[0,1]`.
pub(crate) fn square_chains(input_dim: usize, chains: &[Affine], m: usize, depth: usize) -> ReluNetwork {
    assert!(m >= 1 && depth >= 1 && !chains.is_empty());
    let c = ChainCoeffs::new(m);
    let mf = m as f64;
    let k = chains.len();
    let mut layers = Vec::with_capacity(depth + 1);
    let mut rows = Vec::with_capacity(k * (m + 1));
    for (expr, off) in chains {
        for j in 0..=m {
            rows.push((expr.clone(), off - j as f64 / mf));
        }
    }
    layers.push(Layer::from_rows(input_dim, rows, true));
    // Offsets of the previous layer's blocks.
    let mut block = m + 1;
    let readout = |coeffs: &[f64], base: usize, units: usize, scale: f64| -> Vec<(usize, f64)> {
        (0..units).map(|j| (base + j, scale * coeffs[j])).collect()
    };
    for level in 2..=depth {
        let units_prev = if level == 2 { m + 1 } else { m };
        // Linear bottleneck per chain: (T, running sum, clamped input). Reading
        // the teeth through it keeps each level at O(M) weights instead of O(M^2).
        let mut summary = Vec::with_capacity(3 * k);
        for ch in 0..k {
            let base = ch * block;
            summary.push((readout(&c.t, base, units_prev, 1.0), 0.0));
            let mut acc = readout(&c.p, base, units_prev, pow(mf, -2.0 * (level - 2) as f64));
            if level > 2 {
                acc.push((base + m, 1.0));
            }
            summary.push((acc, 0.0));
            let carry = if level == 2 { readout(&c.clamp, base, units_prev, 1.0) } else { vec![(base + m + 1, 1.0)] };
            summary.push((carry, 0.0));
        }
        layers.push(Layer::from_rows(k * block, summary, false));
        let mut rows = Vec::with_capacity(k * (m + 2));
        for ch in 0..k {
            for j in 0..m {
                rows.push((vec![(3 * ch, 1.0)], -(j as f64) / mf));
            }
            rows.push((vec![(3 * ch + 1, 1.0)], 0.0));
            rows.push((vec![(3 * ch + 2, 1.0)], 0.0));
        }
        layers.push(Layer::from_rows(3 * k, rows, true));
        block = m + 2;
    }
    let units_last = if depth == 1 { m + 1 } else { m };
    let mut out_rows = Vec::with_capacity(2 * k);
    let mut carries = Vec::with_capacity(k);
    for ch in 0..k {
        let base = ch * block;
        let mut q = readout(&c.p, base, units_last, pow(mf, -2.0 * (depth - 1) as f64));
        let tail = readout(&c.t, base, units_last, pow(mf, -2.0 * depth as f64));
        q.extend(tail);
        if depth >= 2 {
            q.push((base + m, 1.0));
            carries.push(vec![(base + m + 1, 1.0)]);
        } else {
            carries.push(readout(&c.clamp, base, units_last, 1.0));
        }
        out_rows.push((q, 0.0));
    }
    out_rows.extend(carries.into_iter().map(|r| (r, 0.0)));
    layers.push(Layer::from_rows(k * block, out_rows, false));
    ReluNetwork::from_parts(input_dim, layers)
}

/// Fewest levels after which the sawtooth error `M^{-2L}/4` drops below `2^-56`.
pub(crate) fn saturating_depth(m: usize) -> usize {
    let m = m.max(2) as f64;
    let need = 56.0 * core::f64::consts::LN_2 - log(4.0);
    libm::ceil(need / (2.0 * log(m))) as usize
}

/// `x^2` on `[a, b]`, error at most `(b-a)^2 M^{-2L}/4`.
pub(crate) fn square_net(a: f64, b: f64, m: usize, depth: usize) -> ReluNetwork {
    let w = b - a;
    let q = square_chains(1, &[(vec![(0, 1.0 / w)], -a / w)], m, depth);
    ReluNetwork::then_affine(&q, &[vec![(0, w * w), (1, 2.0 * a * w)]], vec![a * a]).expect("dims chain")
}

/// `x y` on `[a1,b1] x [a2,b2]` by polarization over three square chains,
/// error at most `3 (b1-a1)(b2-a2) M^{-2L} / 4`.
pub(crate) fn product_net(r1: (f64, f64), r2: (f64, f64), m: usize, depth: usize) -> ReluNetwork {
    let (w1, w2) = (r1.1 - r1.0, r2.1 - r2.0);
    let xs = (vec![(0, 1.0 / w1)], -r1.0 / w1);
    let ys = (vec![(1, 1.0 / w2)], -r2.0 / w2);
    let half = (vec![(0, 0.5 / w1), (1, 0.5 / w2)], -0.5 * (r1.0 / w1 + r2.0 / w2));
    let q = square_chains(2, &[half, xs, ys], m, depth);
    // Outputs: Q_half, Q_x, Q_y, half_c, x_c, y_c.
    let ww = w1 * w2;
    let out = vec![(0, 2.0 * ww), (1, -0.5 * ww), (2, -0.5 * ww), (4, r2.0 * w1), (5, r1.0 * w2)];
    ReluNetwork::then_affine(&q, &[out], vec![r1.0 * r2.0]).expect("dims chain")
}

fn widen(r: (f64, f64)) -> (f64, f64) {
    let pad = 1e-6 * (r.1 - r.0).max(r.0.abs()).max(r.1.abs());
    (r.0 - pad, r.1 + pad)
}

fn interval_product(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Product of all inputs, each within its range, as a chain of products.
pub(crate) fn product_chain(ranges: &[(f64, f64)], m: usize, depth: usize) -> ReluNetwork {
    let k = ranges.len();
    assert!(k >= 1);
    if k == 1 {
        return ReluNetwork::identity(1);
    }
    let mut acc_range = ranges[0];
    let mut net: Option<ReluNetwork> = None;
    for (j, r) in ranges.iter().enumerate().skip(1) {
        let prod = product_net(widen(acc_range), widen(*r), m, depth);
        let rest = k - j - 1;
        let stage = if rest > 0 {
            ReluNetwork::stack_all(&[&prod, &ReluNetwork::identity(rest)]).expect("stack")
        } else {
            prod
        };
        net = Some(match net {
            None => stage,
            Some(prev) => ReluNetwork::compose(&stage, &prev).expect("dims chain"),
        });
        acc_range = interval_product(acc_range, *r);
    }
    net.expect("k >= 2")
}

/// `sum_k coeffs[k] x^k` for `x` in `[-r, r]`.
pub(crate) fn power_series_net(coeffs: &[f64], r: f64, m: usize, depth: usize) -> ReluNetwork {
    let mut parts: Vec<ReluNetwork> = Vec::new();
    let mut out = Vec::new();
    let mut constant = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        match k {
            0 => constant = c,
            _ => {
                let dup = ReluNetwork::affine(&vec![vec![(0, 1.0)]; k], vec![0.0; k], 1);
                let chain = product_chain(&vec![(-r, r); k], m, depth);
                parts.push(ReluNetwork::compose(&chain, &dup).expect("dims chain"));
                out.push((parts.len() - 1, c));
            }
        }
    }
    if parts.is_empty() {
        return ReluNetwork::affine(&[vec![]], vec![constant], 1);
    }
    let refs: Vec<&ReluNetwork> = parts.iter().collect();
    let all = ReluNetwork::parallel_all(&refs).expect("shared input");
    ReluNetwork::then_affine(&all, &[out], vec![constant]).expect("dims chain")
}

fn check_range(a: f64, b: f64, what: &str) -> Result<()> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(domain(format!("{what} needs a finite range with a < b, got [{a}, {b}]")));
    }
    Ok(())
}

/// `x^2` on `[a, b]`; bound `(b-a)^2 N^{-L}`, width `3N+1`, depth `L`.
pub fn build_square(a: f64, b: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    check_range(a, b, "square")?;
    let net = square_net(a, b, params.n, params.l);
    let grid: Vec<Vec<f64>> = crate::math::linspace(a, b, 10_000).into_iter().map(|x| vec![x]).collect();
    let measurement = measure(&net, grid, |x, out| out[0] = x[0] * x[0]);
    let claimed = (b - a) * (b - a) * pow(params.n as f64, -(params.l as f64));
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "square",
            params: format!("a={a} b={b} {}", params.describe()),
            grid: format!("uniform [{a}, {b}]"),
            measurement,
            bound: Bound::Closed(claimed),
            budget: Some(SizeBudget { width: 3 * params.n + 1, depth: params.l }),
            formula: "(b-a)^2 N^-L",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// `x y` on a box; bound `6 (b1-a1)(b2-a2) N^{-L}`, width `9N+1`, depth `L`.
pub fn build_product(a1: f64, b1: f64, a2: f64, b2: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    check_range(a1, b1, "product")?;
    check_range(a2, b2, "product")?;
    let net = product_net((a1, b1), (a2, b2), params.n, params.l);
    let grid = tensor_grid(&[(a1, b1), (a2, b2)], 201);
    let measurement = measure(&net, grid, |x, out| out[0] = x[0] * x[1]);
    let claimed = 6.0 * (b1 - a1) * (b2 - a2) * pow(params.n as f64, -(params.l as f64));
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "product",
            params: format!("box=[{a1},{b1}]x[{a2},{b2}] {}", params.describe()),
            grid: "uniform 201^2".into(),
            measurement,
            bound: Bound::Closed(claimed),
            budget: Some(SizeBudget { width: 9 * params.n + 1, depth: params.l }),
            formula: "6 (b1-a1)(b2-a2) N^-L",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// Per-product depth inside monomials: the `7sL` allowance, stopped once the
/// sawtooth error is below double precision.
fn monomial_depth(params: &ApproxParams) -> usize {
    (7 * params.s * params.l).min(saturating_depth(params.n + 1))
}

fn monomial_bound(factor: usize, k: usize, r: f64, params: &ApproxParams) -> f64 {
    30.0 * factor as f64 * pow(r, k as f64) * pow((params.n + 1) as f64, -(7.0 * (params.s * params.l) as f64))
}

fn grid_per_axis(k: usize) -> usize {
    let per = libm::floor(pow(60_000.0, 1.0 / k as f64)) as usize;
    per.clamp(3, 10_001)
}

/// `x_1 ... x_k` on `[-R, R]^k`; bound `30(k-1) R^k (N+1)^{-7sL}`,
/// width `9(N+1)+k-1`, depth `7sL(k-1)`.
pub fn build_monomial(k: usize, r: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    if k == 0 || k > params.s {
        return Err(domain(format!("monomial degree must satisfy 1 <= k <= s, got k={k} s={}", params.s)));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("monomial range must be positive, got {r}")));
    }
    let net = product_chain(&vec![(-r, r); k], params.n + 1, monomial_depth(params));
    let grid = tensor_grid(&vec![(-r, r); k], grid_per_axis(k));
    let measurement = measure(&net, grid, |x, out| out[0] = x.iter().product());
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "monomial",
            params: format!("k={k} R={r} {}", params.describe()),
            grid: format!("uniform {}^{k}", grid_per_axis(k)),
            measurement,
            bound: Bound::Closed(monomial_bound(k - 1, k, r, params)),
            budget: Some(SizeBudget { width: 9 * (params.n + 1) + k - 1, depth: 7 * params.s * params.l * (k - 1) }),
            formula: "30(k-1) R^k (N+1)^-7sL",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

/// `y^nu = prod_i y_i^{nu_i}` on `[-R, R]^d`; bound `30|nu| R^|nu| (N+1)^{-7sL}`.
pub fn build_polynomial(nu: &[usize], r: f64, params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    let d = nu.len();
    let k: usize = nu.iter().sum();
    if d == 0 {
        return Err(crate::error::Error::Empty("multi-index"));
    }
    if k > params.s {
        return Err(domain(format!("polynomial degree {k} exceeds s = {}", params.s)));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("polynomial range must be positive, got {r}")));
    }
    let net = if k == 0 {
        ReluNetwork::affine(&[vec![]], vec![1.0], d)
    } else {
        let dup: Vec<Vec<(usize, f64)>> =
            nu.iter().enumerate().flat_map(|(i, &p)| core::iter::repeat_n(vec![(i, 1.0)], p)).collect();
        let dup = ReluNetwork::affine(&dup, vec![0.0; k], d);
        let chain = product_chain(&vec![(-r, r); k], params.n + 1, monomial_depth(params));
        ReluNetwork::compose(&chain, &dup)?
    };
    let per = grid_per_axis(d);
    let grid = tensor_grid(&vec![(-r, r); d], per);
    let measurement =
        measure(&net, grid, |x, out| out[0] = x.iter().zip(nu).map(|(v, &p)| libm::pow(*v, p as f64)).product());
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "polynomial",
            params: format!("nu={nu:?} R={r} {}", params.describe()),
            grid: format!("uniform {per}^{d}"),
            measurement,
            bound: Bound::Closed(monomial_bound(k, k, r, params)),
            budget: Some(SizeBudget {
                width: 9 * (params.n + 1) + k.max(1) - 1,
                depth: 7 * params.s * params.l * k.max(1).saturating_sub(1),
            }),
            formula: "30|nu| R^|nu| (N+1)^-7sL",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sawtooth_error_matches_the_quarter_law() {
        for (m, l) in [(2, 1), (3, 2), (4, 3)] {
            let net = square_net(0.0, 1.0, m, l);
            let err = crate::math::linspace(0.0, 1.0, 20_001)
                .into_iter()
                .map(|x| (net.eval(&[x])[0] - x * x).abs())
                .fold(0.0, f64::max);
            let law = 0.25 * pow(m as f64, -2.0 * l as f64);
            assert!(err <= law * (1.0 + 1e-9) && err >= 0.9 * law, "M={m} L={l}: {err} vs {law}");
        }
    }

    #[test]
    fn square_clamps_outside_its_range() {
        let net = square_net(-1.0, 2.0, 3, 2);
        assert!((net.eval(&[5.0])[0] - 4.0).abs() < 1e-3);
        assert!((net.eval(&[-7.0])[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn product_chain_of_three() {
        let net = product_chain(&[(-1.0, 1.0), (-2.0, 2.0), (0.0, 3.0)], 4, saturating_depth(4));
        let got = net.eval(&[0.3, -1.7, 2.2])[0];
        assert!((got - 0.3 * -1.7 * 2.2).abs() < 1e-12, "{got}");
    }
}
