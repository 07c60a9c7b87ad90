//! Scalar helpers over `libm`, plus deterministic reductions.

pub use libm::{erf, erfc, exp, expm1, fabs, floor, log, log1p, pow, sqrt};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor applied to log-densities so that downstream rescale factors stay finite.
pub const LOG_FLOOR: f64 = -745.0;

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + log1p(exp(lo - hi))
}

/// Log-sum-exp over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + log(pairwise_sum_by(xs.len(), |i| exp(xs[i] - max)))
}

/// Fixed-order pairwise summation of `f(0) + ... + f(n-1)`.
///
/// The reduction tree depends only on `n`, so the result is bit-stable no
/// matter how the terms were produced.
pub fn pairwise_sum_by(n: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn go(lo: usize, hi: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= 16 {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    go(0, n, f)
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

pub fn norm2(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x - 0.5 * LN_2PI)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// `n` points evenly spaced on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> alloc::vec::Vec<f64> {
    match n {
        0 => alloc::vec::Vec::new(),
        1 => alloc::vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
        }
    }
}

/// `n` points evenly spaced in log scale on `[a, b]`, endpoints exact.
pub fn logspace(a: f64, b: f64, n: usize) -> alloc::vec::Vec<f64> {
    let (la, lb) = (log(a), log(b));
    let mut out: alloc::vec::Vec<f64> = linspace(la, lb, n).into_iter().map(exp).collect();
    if let Some(first) = out.first_mut() {
        *first = a;
    }
    if n > 1 {
        out[n - 1] = b;
    }
    out
}

/// Composite trapezoid rule for samples `ys` at nodes `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    pairwise_sum_by(xs.len().saturating_sub(1), |i| 0.5 * (xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]))
}
