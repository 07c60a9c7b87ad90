//! Counts violations of the uniform score bound while a field is being evaluated.

use std::cell::Cell;

use scoregen_core::field::{Provenance, ScoreField};
use scoregen_core::kde::score_bound;

/// Passes evaluations through and records how many outputs exceed
/// `sqrt(2 (log n + 1)) / sigma_t`, and by how much at worst.
pub struct BoundAudit<S> {
    inner: S,
    n: usize,
    visited: Cell<usize>,
    violations: Cell<usize>,
    worst_ratio: Cell<f64>,
}

impl<S: ScoreField> BoundAudit<S> {
    pub fn new(inner: S, n: usize) -> Self {
        Self { inner, n, visited: Cell::new(0), violations: Cell::new(0), worst_ratio: Cell::new(0.0) }
    }

    pub fn visited(&self) -> usize {
        self.visited.get()
    }

    pub fn violations(&self) -> usize {
        self.violations.get()
    }

    /// Largest `|output| / bound` seen.
    pub fn worst_ratio(&self) -> f64 {
        self.worst_ratio.get()
    }
}

impl<S: ScoreField> ScoreField for BoundAudit<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        self.inner.eval_into(y, t, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = norm / score_bound(self.n, t);
        self.visited.set(self.visited.get() + 1);
        // NaN counts as a violation.
        if !(ratio <= 1.0) {
            self.violations.set(self.violations.get() + 1);
        }
        if !(ratio <= self.worst_ratio.get()) {
            self.worst_ratio.set(ratio);
        }
    }

    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }
}
