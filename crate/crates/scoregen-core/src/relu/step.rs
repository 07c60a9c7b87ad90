//! Staircase networks: the index of the subinterval containing `x`.
//!
//! Each boundary contributes a ramp that rises from 0 to 1 across the gap
//! `[c-δ, c]`, so the sum of ramps is exact away from the gaps. Ramps are
//! spread over layer pairs of `4N` ramps each. For
//! many intervals the index is split as `K2 * J + j`: a coarse staircase finds
//! `J`, then a fine one runs on `x - a - J K2 H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::cert::{Bound, Draft, ErrorCertificate, SizeBudget};
use super::network::{Layer, ReluNetwork};
use super::poly::Affine;
use super::ApproxParams;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepOutput {
    /// The index `K2 J + j`.
    Index,
    /// `(J, j)`.
    Parts,
    /// `(J, j, x)`.
    PartsAndInput,
}

pub(crate) struct Staircase {
    pub net: ReluNetwork,
    pub coarse: usize,
    pub fine: usize,
}

fn neg(e: &Affine) -> Affine {
    (e.0.iter().map(|&(c, v)| (c, -v)).collect(), -e.1)
}

fn scaled(e: &Affine, k: f64) -> Affine {
    (e.0.iter().map(|&(c, v)| (c, k * v)).collect(), k * e.1)
}

fn add(a: &Affine, b: &Affine) -> Affine {
    let mut t = a.0.clone();
    t.extend_from_slice(&b.0);
    (t, a.1 + b.1)
}

/// Layer-by-layer builder tracking where the carried quantities live.
struct Builder {
    layers: Vec<Layer>,
    cols: usize,
    x: Affine,
    acc: Affine,
    extra: Option<Affine>,
    per_layer: usize,
    delta: f64,
    eta: f64,
}

impl Builder {
    /// Ramps at `thresholds` applied to the current `x`, added to `acc`.
    ///
    /// A ramp is `ReLU(1 - ReLU(1 - A))` with `A` rising from 0 to 1 across the
    /// gap. Off the gaps it is exactly 0 or 1 in floating point, which a
    /// difference of two unit outputs is not.
    fn ramps(&mut self, thresholds: &[f64]) {
        let rise = self.delta - 2.0 * self.eta;
        for chunk in thresholds.chunks(self.per_layer) {
            let mut rows: Vec<Affine> = Vec::with_capacity(chunk.len() + 4);
            for &c in chunk {
                // 1 - A with A = (x - c + delta - eta) / rise; the rise is pulled
                // `eta` inside the gap so rounding in `x` cannot straddle it.
                let down = scaled(&self.x, -1.0 / rise);
                rows.push((down.0, down.1 + 1.0 - (self.delta - self.eta - c) / rise));
            }
            let base = rows.len();
            rows.push(self.x.clone());
            rows.push(neg(&self.x));
            rows.push(self.acc.clone());
            if let Some(e) = &self.extra {
                rows.push(e.clone());
            }
            let width = rows.len();
            self.layers.push(Layer::from_rows(self.cols, rows, true));
            let mut rows: Vec<Affine> = (0..chunk.len()).map(|i| (vec![(i, -1.0)], 1.0)).collect();
            rows.extend((base..width).map(|c| (vec![(c, 1.0)], 0.0)));
            self.layers.push(Layer::from_rows(width, rows, true));
            self.cols = width;
            self.x = (vec![(base, 1.0), (base + 1, -1.0)], 0.0);
            let mut acc: Vec<(usize, f64)> = vec![(base + 2, 1.0)];
            acc.extend((0..chunk.len()).map(|i| (i, 1.0)));
            self.acc = (acc, 0.0);
            if self.extra.is_some() {
                self.extra = Some((vec![(base + 3, 1.0)], 0.0));
            }
        }
    }
}

fn layers_for(count: usize, per_layer: usize) -> usize {
    2 * count.saturating_sub(1).div_ceil(per_layer)
}

/// Fine count `K2` dividing `k` that minimizes the number of ramp layers.
fn split(k: usize, per_layer: usize) -> usize {
    let mut best = (layers_for(k, per_layer), k);
    for k2 in 1..=k {
        if k.is_multiple_of(k2) {
            let cost = layers_for(k / k2, per_layer) + layers_for(k2, per_layer);
            if cost < best.0 {
                best = (cost, k2);
            }
        }
    }
    best.1
}

pub(crate) fn staircase(a: f64, b: f64, k: usize, delta: f64, n: usize, output: StepOutput) -> Staircase {
    let h = (b - a) / k as f64;
    let per_layer = 4 * n;
    let fine = split(k, per_layer);
    let coarse = k / fine;
    let mut bld = Builder {
        layers: Vec::new(),
        cols: 1,
        x: (vec![(0, 1.0)], 0.0),
        acc: (vec![], 0.0),
        extra: None,
        per_layer,
        delta,
        eta: (1e-6 * delta).max(1e-13 * a.abs().max(b.abs()).max(1.0)).min(0.25 * delta),
    };
    let coarse_thresholds: Vec<f64> = (1..coarse).map(|i| a + (i * fine) as f64 * h).collect();
    bld.ramps(&coarse_thresholds);
    let fine_thresholds: Vec<f64> = (1..fine).map(|i| i as f64 * h).collect();
    let x_before = bld.x.clone();
    let j_coarse = bld.acc.clone();
    let span = fine as f64 * h;
    // u = x - a - J K2 H
    bld.x = add(&(x_before.0.clone(), x_before.1 - a), &scaled(&j_coarse, -span));
    let keep_x = output == StepOutput::PartsAndInput;
    match output {
        StepOutput::Index => bld.acc = scaled(&j_coarse, fine as f64),
        _ => {
            bld.acc = (vec![], 0.0);
            bld.extra = Some(j_coarse);
        }
    }
    bld.ramps(&fine_thresholds);
    // Recover x from u when it must be returned.
    let j_total = bld.extra.clone();
    let mut outputs: Vec<Affine> = Vec::new();
    match output {
        StepOutput::Index => outputs.push(bld.acc.clone()),
        _ => {
            let big_j = j_total.expect("parts carry J");
            outputs.push(big_j.clone());
            outputs.push(bld.acc.clone());
            if keep_x {
                outputs.push(add(&(bld.x.0.clone(), bld.x.1 + a), &scaled(&big_j, span)));
            }
        }
    }
    let cols = bld.cols;
    bld.layers.push(Layer::from_rows(cols, outputs, false));
    Staircase { net: ReluNetwork::from_parts(1, bld.layers), coarse, fine }
}

pub(crate) fn step_budget(params: &ApproxParams) -> SizeBudget {
    SizeBudget { width: 4 * params.n + 3, depth: 4 * params.l + 5 }
}

fn validate(a: f64, b: f64, k: usize, delta: f64) -> Result<()> {
    if !(a < b) {
        return Err(domain(format!("step needs a < b, got [{a}, {b}]")));
    }
    if k == 0 {
        return Err(domain("step needs at least one interval"));
    }
    let max_delta = (b - a) / (3.0 * k as f64);
    if !(delta > 0.0 && delta <= max_delta * (1.0 + 1e-12)) {
        return Err(domain(format!("delta must lie in (0, {max_delta}], got {delta}")));
    }
    Ok(())
}

/// Outputs `k` exactly on `[a + kH, a + (k+1)H - δ]`, `H = (b-a)/K`, and
/// `K-1` from `b - H` on. Width `4N+3`, depth `4L+5`.
pub fn build_step(a: f64, b: f64, k: usize, delta: f64, params: &ApproxParams) -> Result<ReluNetwork> {
    validate(a, b, k, delta)?;
    let st = staircase(a, b, k, delta, params.n, StepOutput::Index);
    step_budget(params).check(&st.net, "step")?;
    Ok(st.net)
}

/// Like [`build_step`] but outputs `(J, j)` with index `K2 J + j`; also returns `K2`.
pub fn build_step_parts(a: f64, b: f64, k: usize, delta: f64, params: &ApproxParams) -> Result<(ReluNetwork, usize)> {
    validate(a, b, k, delta)?;
    let st = staircase(a, b, k, delta, params.n, StepOutput::Parts);
    let budget = SizeBudget { width: step_budget(params).width + 1, depth: step_budget(params).depth };
    budget.check(&st.net, "step_parts")?;
    Ok((st.net, st.fine))
}

/// [`build_step`] plus a certificate: the sup of `|φ(x) - k|` over every
/// retained subinterval (endpoints and 30 interior points each) must vanish.
pub fn build_step_certified(
    a: f64,
    b: f64,
    k: usize,
    delta: f64,
    params: &ApproxParams,
) -> Result<(ReluNetwork, ErrorCertificate)> {
    let net = build_step(a, b, k, delta, params)?;
    let h = (b - a) / k as f64;
    const PER_INTERVAL: usize = 32;
    let points = (0..k).flat_map(|i| {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == k { b } else { lo + h - delta };
        (0..PER_INTERVAL).map(move |p| vec![lo + (hi - lo) * p as f64 / (PER_INTERVAL - 1) as f64])
    });
    let measurement = super::cert::measure(&net, points, |x, out| {
        out[0] = (libm::floor((x[0] - a) / h) as usize).min(k - 1) as f64;
    });
    let cert = ErrorCertificate::issue(
        Draft {
            builder: "step",
            params: format!("{}, a={a}, b={b}, K={k}, delta={delta}", params.describe()),
            grid: format!("{PER_INTERVAL} points on each retained subinterval"),
            measurement,
            bound: Bound::Closed(0.0),
            budget: Some(step_budget(params)),
            formula: "exact off the gaps",
            notes: Vec::new(),
        },
        &net,
    )?;
    Ok((net, cert))
}
