//! Exact small networks and piecewise-linear interpolation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::cert::{Bound, Draft, ErrorCertificate, SizeBudget};
use super::network::{Layer, ReluNetwork};
use super::ApproxParams;
use crate::error::{domain, Error, Result};
use crate::math::log;

/// `|x|` as `ReLU(x) + ReLU(-x)`.
pub fn build_abs() -> ReluNetwork {
    ReluNetwork::from_parts(
        1,
        vec![
            Layer::from_rows(1, vec![(vec![(0, 1.0)], 0.0), (vec![(0, -1.0)], 0.0)], true),
            Layer::from_rows(2, vec![(vec![(0, 1.0), (1, 1.0)], 0.0)], false),
        ],
    )
}

/// `max(a, b) = b + ReLU(a - b)`, with `b` carried as a sign pair.
pub fn build_max() -> ReluNetwork {
    ReluNetwork::from_parts(
        2,
        vec![
            Layer::from_rows(
                2,
                vec![(vec![(0, 1.0), (1, -1.0)], 0.0), (vec![(1, 1.0)], 0.0), (vec![(1, -1.0)], 0.0)],
                true,
            ),
            Layer::from_rows(3, vec![(vec![(0, 1.0), (1, 1.0), (2, -1.0)], 0.0)], false),
        ],
    )
}

/// `min(a, b) = b - ReLU(b - a)`.
pub fn build_min() -> ReluNetwork {
    ReluNetwork::from_parts(
        2,
        vec![
            Layer::from_rows(
                2,
                vec![(vec![(1, 1.0), (0, -1.0)], 0.0), (vec![(1, 1.0)], 0.0), (vec![(1, -1.0)], 0.0)],
                true,
            ),
            Layer::from_rows(3, vec![(vec![(0, -1.0), (1, 1.0), (2, -1.0)], 0.0)], false),
        ],
    )
}

/// Median of three inputs, width 6 and depth 2.
///
/// With `hi`/`lo` the larger/smaller of the first two inputs, the median is
/// the third input clamped to `[lo, hi]`, i.e.
/// `(lo + hi)/2 + (|c - lo| - |c - hi|)/2`.
pub fn build_mid() -> ReluNetwork {
    // Layer 1: ±(a+b), ±(a-b), ±c.
    let l1 = Layer::from_rows(
        3,
        vec![
            (vec![(0, 1.0), (1, 1.0)], 0.0),
            (vec![(0, -1.0), (1, -1.0)], 0.0),
            (vec![(0, 1.0), (1, -1.0)], 0.0),
            (vec![(0, -1.0), (1, 1.0)], 0.0),
            (vec![(2, 1.0)], 0.0),
            (vec![(2, -1.0)], 0.0),
        ],
        true,
    );
    // sum = u0 - u1, |a-b| = u2 + u3, c = u4 - u5.
    // hi - c = sum/2 + |a-b|/2 - c, lo - c = sum/2 - |a-b|/2 - c.
    let hi_minus_c = vec![(0, 0.5), (1, -0.5), (2, 0.5), (3, 0.5), (4, -1.0), (5, 1.0)];
    let lo_minus_c = vec![(0, 0.5), (1, -0.5), (2, -0.5), (3, -0.5), (4, -1.0), (5, 1.0)];
    let neg = |r: &Vec<(usize, f64)>| r.iter().map(|&(c, v)| (c, -v)).collect::<Vec<_>>();
    let l2 = Layer::from_rows(
        6,
        vec![
            (vec![(0, 1.0), (1, -1.0)], 0.0),
            (vec![(0, -1.0), (1, 1.0)], 0.0),
            (hi_minus_c.clone(), 0.0),
            (neg(&hi_minus_c), 0.0),
            (lo_minus_c.clone(), 0.0),
            (neg(&lo_minus_c), 0.0),
        ],
        true,
    );
    // sum/2 - |hi - c|/2 + |lo - c|/2
    let out = Layer::from_rows(6, vec![(vec![(0, 0.5), (1, -0.5), (2, -0.5), (3, -0.5), (4, 0.5), (5, 0.5)], 0.0)], false);
    ReluNetwork::from_parts(3, vec![l1, l2, out])
}

/// `clamp(x, lo, hi) = lo + ReLU(x - lo) - ReLU(x - hi)`.
pub fn build_clamp(lo: f64, hi: f64) -> Result<ReluNetwork> {
    if !(lo < hi) {
        return Err(domain(format!("clamp needs lo < hi, got [{lo}, {hi}]")));
    }
    Ok(ReluNetwork::from_parts(
        1,
        vec![
            Layer::from_rows(1, vec![(vec![(0, 1.0)], -lo), (vec![(0, 1.0)], -hi)], true),
            Layer::from_rows(2, vec![(vec![(0, 1.0), (1, -1.0)], lo)], false),
        ],
    ))
}

/// `ReLU(x + c) - c`, equal to `x` for `x >= -c`.
pub fn identity_gadget(c: f64) -> ReluNetwork {
    ReluNetwork::from_parts(
        1,
        vec![Layer::from_rows(1, vec![(vec![(0, 1.0)], c)], true), Layer::from_rows(1, vec![(vec![(0, 1.0)], -c)], false)],
    )
}

/// Continuous piecewise-linear interpolant through `(knots[i], values[i])`,
/// constant outside `[knots[0], knots[last]]`.
///
/// One ReLU unit per knot with a nonzero slope change. When those do not fit
/// in `max_width`, they are spread over several layers of `max_width - 4`
/// units, carrying the input and the running sum as sign pairs.
pub fn piecewise_linear(knots: &[f64], values: &[f64], max_width: usize) -> Result<ReluNetwork> {
    if knots.is_empty() {
        return Err(Error::Empty("knots"));
    }
    if knots.len() != values.len() {
        return Err(Error::Dimension { expected: knots.len(), found: values.len() });
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("knots must be strictly increasing"));
    }
    let k = knots.len();
    let slopes: Vec<f64> = (0..k - 1).map(|i| (values[i + 1] - values[i]) / (knots[i + 1] - knots[i])).collect();
    let units: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let right = if i + 1 < k { slopes[i] } else { 0.0 };
            let left = if i > 0 { slopes[i - 1] } else { 0.0 };
            (knots[i], right - left)
        })
        .filter(|u| u.1 != 0.0)
        .collect();
    let base = values[0];
    if units.is_empty() {
        return Ok(ReluNetwork::affine(&[vec![]], vec![base], 1));
    }
    if units.len() <= max_width {
        let l1 = Layer::from_rows(1, units.iter().map(|&(c, _)| (vec![(0, 1.0)], -c)).collect(), true);
        let out = Layer::from_rows(units.len(), vec![(units.iter().enumerate().map(|(i, u)| (i, u.1)).collect(), base)], false);
        return Ok(ReluNetwork::from_parts(1, vec![l1, out]));
    }
    if max_width < 5 {
        return Err(Error::Construction(format!("{} interpolation units do not fit width {max_width}", units.len())));
    }
    let chunks: Vec<&[(f64, f64)]> = units.chunks(max_width - 4).collect();
    let mut layers = Vec::with_capacity(chunks.len() + 1);
    // Column layout of the previous layer: chunk units, then x+, x-, then acc+, acc-.
    let mut prev_units = 0usize;
    let mut prev_has_acc = false;
    let mut prev_cols = 1usize;
    for (j, chunk) in chunks.iter().enumerate() {
        let last = j + 1 == chunks.len();
        let x_expr: Vec<(usize, f64)> =
            if j == 0 { vec![(0, 1.0)] } else { vec![(prev_units, 1.0), (prev_units + 1, -1.0)] };
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = chunk.iter().map(|&(c, _)| (x_expr.clone(), -c)).collect();
        if j > 0 {
            let mut acc: Vec<(usize, f64)> = chunks[j - 1].iter().enumerate().map(|(i, u)| (i, u.1)).collect();
            if prev_has_acc {
                acc.push((prev_units + 2, 1.0));
                acc.push((prev_units + 3, -1.0));
            }
            let neg: Vec<(usize, f64)> = acc.iter().map(|&(c, v)| (c, -v)).collect();
            if !last {
                rows.push((x_expr.clone(), 0.0));
                rows.push((x_expr.iter().map(|&(c, v)| (c, -v)).collect(), 0.0));
            }
            rows.push((acc, 0.0));
            rows.push((neg, 0.0));
        } else if !last {
            rows.push((vec![(0, 1.0)], 0.0));
            rows.push((vec![(0, -1.0)], 0.0));
        }
        let n_rows = rows.len();
        layers.push(Layer::from_rows(prev_cols, rows, true));
        prev_units = chunk.len();
        prev_has_acc = j > 0;
        prev_cols = n_rows;
        if last {
            let mut out: Vec<(usize, f64)> = chunk.iter().enumerate().map(|(i, u)| (i, u.1)).collect();
            if j > 0 {
                out.push((prev_units, 1.0));
                out.push((prev_units + 1, -1.0));
            }
            layers.push(Layer::from_rows(prev_cols, vec![(out, base)], false));
        }
    }
    Ok(ReluNetwork::from_parts(1, layers))
}

/// Size budget for fitting `N^2 L^2` points.
pub(crate) fn point_fit_budget(p: &ApproxParams) -> SizeBudget {
    let n = p.n as f64;
    let l = p.l as f64;
    SizeBudget {
        width: libm::floor(16.0 * p.s as f64 * (n + 1.0) * log2(8.0 * n)) as usize,
        depth: libm::floor(5.0 * (l + 2.0) * log2(4.0 * l)) as usize,
    }
}

pub(crate) fn log2(x: f64) -> f64 {
    log(x) / core::f64::consts::LN_2
}

/// Network with `φ(i) = values[i]` at the integers `0..K` and `0 <= φ <= 1` everywhere.
///
/// Realized as the exact piecewise-linear interpolant over the integer knots,
/// so the fit is exact up to rounding and the range stays within the convex
/// hull of the values. Fails if the budget for `(N, L, s)` is exceeded.
pub fn build_point_fit(values: &[f64], params: &ApproxParams) -> Result<ReluNetwork> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(domain(format!("point-fit values must lie in [0, 1], found {v}")));
    }
    let budget = point_fit_budget(params);
    let knots: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let net = piecewise_linear(&knots, values, budget.width)?;
    budget.check(&net, "point_fit")?;
    let tol = params.fine_scale();
    for (i, v) in values.iter().enumerate() {
        let got = net.eval(&[i as f64])[0];
        if (got - v).abs() > tol.max(1e-13) {
            return Err(Error::Certificate(format!("point_fit misses value {i}: {got} vs {v}")));
        }
    }
    Ok(net)
}

/// [`build_point_fit`] plus a certificate over the integer nodes; the range
/// `[0, 1]` is checked on a dense grid covering one unit beyond each end.
pub fn build_point_fit_certified(values: &[f64], params: &ApproxParams) -> Result<(ReluNetwork, ErrorCertificate)> {
    let net = build_point_fit(values, params)?;
    let k = values.len();
    let span = k as f64 + 1.0;
    let dense = (k + 2) * 20;
    let mut lowest = f64::INFINITY;
    let mut highest = f64::NEG_INFINITY;
    for i in 0..=dense {
        let v = net.eval(&[-1.0 + span * i as f64 / dense as f64])[0];
        lowest = lowest.min(v);
        highest = highest.max(v);
    }
    if lowest < 0.0 || highest > 1.0 {
        return Err(Error::Certificate(format!("point_fit leaves [0, 1]: range [{lowest}, {highest}]")));
    }
    let measurement = super::cert::measure(&net, (0..k).map(|i| vec![i as f64]), |x, out| out[0] = values[x[0] as usize]);
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "point_fit",
            params: params.describe(),
            grid: format!("integers 0..{k}"),
            measurement,
            bound: Bound::Closed(params.fine_scale()),
            budget: Some(point_fit_budget(params)),
            formula: "N^-2s L^-2s",
            notes: vec![("range_min".into(), lowest), ("range_max".into(), highest)],
        },
        &net,
    )?;
    Ok((net, cert))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_small_nets() {
        assert_eq!(build_abs().eval(&[-3.5]), vec![3.5]);
        assert_eq!(build_max().eval(&[2.0, 7.0]), vec![7.0]);
        assert_eq!(build_min().eval(&[2.0, 7.0]), vec![2.0]);
        assert_eq!(build_mid().eval(&[1.0, 5.0, 3.0]), vec![3.0]);
        assert_eq!(build_mid().width(), 6);
        assert_eq!(build_mid().depth(), 2);
        assert_eq!(build_clamp(-1.0, 2.0).unwrap().eval(&[5.0]), vec![2.0]);
    }

    #[test]
    fn multi_layer_interpolant_matches_single_layer() {
        let knots: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let values: Vec<f64> = knots.iter().map(|x| libm::sin(*x)).collect();
        let wide = piecewise_linear(&knots, &values, 100).unwrap();
        let narrow = piecewise_linear(&knots, &values, 7).unwrap();
        assert_eq!(wide.depth(), 1);
        assert!(narrow.depth() > 5 && narrow.width() <= 7);
        for i in 0..400 {
            let x = -1.0 + i as f64 * 0.03;
            let (a, b) = (wide.eval(&[x])[0], narrow.eval(&[x])[0]);
            assert!((a - b).abs() < 1e-12, "{x}: {a} vs {b}");
        }
        for (k, v) in knots.iter().zip(&values) {
            assert!((narrow.eval(&[*k])[0] - v).abs() < 1e-12);
        }
    }
}
