//! Pass/fail records shared by all verification routines.

use serde::Serialize;

/// One verified inequality: passes iff `residual <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            // NaN residuals fail
            pass: residual <= tolerance,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A boolean condition recorded as residual 0 (holds) or 1 (fails).
    pub fn flag(name: impl Into<String>, holds: bool) -> Self {
        Self::new(name, if holds { 0.0 } else { 1.0 }, 0.0)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Keeps the worst (largest residual-minus-tolerance) entry per check name, in first-seen order.
#[derive(Debug, Default, Clone)]
pub struct WorstOf {
    checks: Vec<Check>,
}

impl WorstOf {
    pub fn record(&mut self, check: Check) {
        let excess = |c: &Check| {
            if c.residual.is_nan() {
                f64::INFINITY
            } else {
                c.residual - c.tolerance
            }
        };
        match self.checks.iter_mut().find(|c| c.name == check.name) {
            Some(slot) => {
                if excess(&check) > excess(slot) {
                    *slot = check;
                }
            }
            None => self.checks.push(check),
        }
    }

    pub fn into_checks(self) -> Vec<Check> {
        self.checks
    }
}
