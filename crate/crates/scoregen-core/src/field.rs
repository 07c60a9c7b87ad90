//! Score fields: anything that maps `(y, t)` to a `d`-vector.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::relu::ReluNetwork;
use crate::targets::Target;
use serde::{Deserialize, Serialize};

/// Where a score field came from; recorded in run logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    True,
    KdeRegularized,
    KdeTruncated,
    ReluConstructed,
    Trained,
    Perturbed,
    Other,
}

pub trait ScoreField {
    fn dim(&self) -> usize;

    /// Writes the score at `(y, t)` into `out`.
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]);

    fn provenance(&self) -> Provenance {
        Provenance::Other
    }

    fn eval(&self, y: &[f64], t: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        self.eval_into(y, t, &mut out);
        out
    }
}

impl<F: ScoreField + ?Sized> ScoreField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval_into(y, t, out)
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
}

impl<F: ScoreField + ?Sized> ScoreField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval_into(y, t, out)
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
}

/// The exact score of a target's OU marginal.
pub struct TrueScore<'a>(pub &'a Target);

impl ScoreField for TrueScore<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        // Targets only fail on dimension or domain errors, which callers rule out.
        let s = self.0.score(t, y).expect("true score evaluation");
        out.copy_from_slice(&s);
    }
    fn provenance(&self) -> Provenance {
        Provenance::True
    }
}

/// A score field given by a closure.
pub struct FnField<F> {
    pub d: usize,
    pub f: F,
    pub provenance: Provenance,
}

impl<F: Fn(&[f64], f64, &mut [f64])> ScoreField for FnField<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(y, t, out)
    }
    fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// `score + bias`, the controlled error used by the Girsanov check.
pub struct Perturbed<S> {
    pub inner: S,
    pub bias: Vec<f64>,
}

impl<S: ScoreField> ScoreField for Perturbed<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        self.inner.eval_into(y, t, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
    fn provenance(&self) -> Provenance {
        Provenance::Perturbed
    }
}

/// A constructed network read as a score field; its input is `y` followed by `t`.
pub struct NetworkField<'a>(pub &'a ReluNetwork);

impl ScoreField for NetworkField<'_> {
    fn dim(&self) -> usize {
        self.0.output_dim()
    }
    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        let mut input = Vec::with_capacity(y.len() + 1);
        input.extend_from_slice(y);
        input.push(t);
        out.copy_from_slice(&self.0.eval(&input));
    }
    fn provenance(&self) -> Provenance {
        Provenance::ReluConstructed
    }
}
