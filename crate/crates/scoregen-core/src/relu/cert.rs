use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::network::{ReluNetwork, Scratch};
use crate::error::{Error, Result};

/// Width/depth limits a builder's output must respect.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SizeBudget {
    pub width: usize,
    pub depth: usize,
}

impl SizeBudget {
    pub fn check(&self, net: &ReluNetwork, builder: &str) -> Result<()> {
        if net.width() > self.width || net.depth() > self.depth {
            return Err(Error::Construction(format!(
                "{builder}: width {} / depth {} exceed the budget {} / {}",
                net.width(),
                net.depth(),
                self.width,
                self.depth
            )));
        }
        Ok(())
    }
}

/// A measured sup-norm error next to the bound it was checked against.
///
/// Only [`ErrorCertificate::issue`] creates one, and it refuses when the
/// measurement exceeds `claimed + fp_floor`. `fp_floor` is a rounding
/// allowance proportional to the output magnitude; it matters only when the
/// claimed bound sits below double precision.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorCertificate {
    pub builder: String,
    pub params: String,
    pub grid: String,
    pub grid_points: usize,
    pub measured: f64,
    pub claimed: f64,
    pub fp_floor: f64,
    pub width: usize,
    pub depth: usize,
    pub param_count: usize,
    /// Size budget, when the bound has explicit constants.
    pub budget: Option<SizeBudget>,
    pub formula: String,
    /// The bound only holds up to an unknown constant; `claimed` then equals
    /// `measured` and `constant` is the ratio to the rate expression.
    pub fitted: bool,
    pub constant: Option<f64>,
    /// Further measured quantities, by name.
    pub notes: Vec<(String, f64)>,
}

impl ErrorCertificate {
    pub fn holds(&self) -> bool {
        let size_ok = self.budget.map(|b| self.width <= b.width && self.depth <= b.depth).unwrap_or(true);
        self.measured <= self.claimed + self.fp_floor && size_ok
    }

    pub(crate) fn issue(draft: Draft, net: &ReluNetwork) -> Result<Self> {
        let (claimed, constant) = match draft.bound {
            Bound::Closed(c) => (c, None),
            Bound::Fitted(rate) => (draft.measurement.sup, Some(draft.measurement.sup / rate)),
        };
        let cert = ErrorCertificate {
            builder: draft.builder.into(),
            params: draft.params,
            grid: draft.grid,
            grid_points: draft.measurement.points,
            measured: draft.measurement.sup,
            claimed,
            fp_floor: 1e-12 * draft.measurement.scale.max(1.0),
            width: net.width(),
            depth: net.depth(),
            param_count: net.param_count(),
            budget: draft.budget,
            formula: draft.formula.into(),
            fitted: matches!(draft.bound, Bound::Fitted(_)),
            constant,
            notes: draft.notes,
        };
        if !cert.measured.is_finite() {
            return Err(Error::Numeric(format!("{}: non-finite grid error", cert.builder)));
        }
        if !cert.holds() {
            return Err(Error::Certificate(format!(
                "{} ({}): measured {:e} vs claimed {:e}, width {} depth {} budget {:?}",
                cert.builder, cert.params, cert.measured, cert.claimed, cert.width, cert.depth, cert.budget
            )));
        }
        Ok(cert)
    }
}

pub(crate) enum Bound {
    Closed(f64),
    /// Rate expression the fitted constant is reported against.
    Fitted(f64),
}

pub(crate) struct Draft {
    pub builder: &'static str,
    pub params: String,
    pub grid: String,
    pub measurement: Measurement,
    pub bound: Bound,
    pub budget: Option<SizeBudget>,
    pub formula: &'static str,
    pub notes: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Measurement {
    /// Largest absolute componentwise error.
    pub sup: f64,
    /// Largest absolute reference value.
    pub scale: f64,
    pub points: usize,
}

/// Sup-norm distance between `net` and `reference` over `points`.
pub(crate) fn measure<I, F>(net: &ReluNetwork, points: I, mut reference: F) -> Measurement
where
    I: IntoIterator<Item = Vec<f64>>,
    F: FnMut(&[f64], &mut [f64]),
{
    let mut scratch = Scratch::default();
    let mut want = alloc::vec![0.0; net.output_dim()];
    let mut m = Measurement { sup: 0.0, scale: 0.0, points: 0 };
    for x in points {
        reference(&x, &mut want);
        let got = net.eval_with(&x, &mut scratch);
        for (g, w) in got.iter().zip(&want) {
            let e = (g - w).abs();
            // NaN must poison the maximum.
            m.sup = if e.is_nan() || m.sup.is_nan() { f64::NAN } else { m.sup.max(e) };
            m.scale = m.scale.max(w.abs());
        }
        m.points += 1;
    }
    m
}

/// Tensor grid with `per_axis` uniform nodes on each `[lo_i, hi_i]`.
pub(crate) fn tensor_grid(ranges: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&(a, b)| crate::math::linspace(a, b, per_axis)).collect();
    let total = per_axis.pow(ranges.len() as u32);
    (0..total)
        .map(|mut k| {
            let mut p = alloc::vec![0.0; ranges.len()];
            for (j, axis) in axes.iter().enumerate().rev() {
                p[j] = axis[k % per_axis];
                k /= per_axis;
            }
            p
        })
        .collect()
}
