//! Residual/tolerance records shared by every verification routine.

use serde::Serialize;

/// Outcome of one numerical check. `pass` is always `residual < tolerance`
/// (and finite), so it can be re-derived from the other two fields.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The identity being checked, written out.
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(
        name: impl Into<String>,
        anchor: impl Into<String>,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        CheckRecord {
            name: name.into(),
            anchor: anchor.into(),
            residual,
            tolerance,
            pass: passes(residual, tolerance),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = passes(self.residual, tolerance);
        self
    }
}

pub fn passes(residual: f64, tolerance: f64) -> bool {
    residual.is_finite() && residual < tolerance
}

/// `diff / max(1, scale)`: absolute below unit scale, relative above it.
pub fn relative(diff: f64, scale: f64) -> f64 {
    diff / scale.abs().max(1.0)
}

/// Worst record across a batch, by name; keeps the first record's anchor and
/// tolerance and the largest residual seen.
pub fn merge_worst(into: &mut Vec<CheckRecord>, batch: Vec<CheckRecord>) {
    for rec in batch {
        match into.iter_mut().find(|r| r.name == rec.name) {
            Some(existing) => {
                if !existing.residual.is_nan()
                    && (rec.residual.is_nan() || rec.residual > existing.residual)
                {
                    existing.residual = rec.residual;
                    existing.pass = passes(existing.residual, existing.tolerance);
                }
            }
            None => into.push(rec),
        }
    }
}
