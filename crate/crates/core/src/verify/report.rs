use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub p: f64,
    pub beta: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub problems: Vec<String>,
}

/// Outcome of one inequality or identity check.
///
/// `passed` means `lhs <= constant * rhs + slack` for the check's own notion
/// of slack; `constant` is `None` when no explicit constant is available and
/// only `measured_ratio = lhs / rhs` is recorded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub constant: Option<f64>,
    pub measured_ratio: f64,
    pub slack_sigmas: f64,
    pub passed: bool,
    pub violations: usize,
    pub samples: usize,
    pub witness: Option<String>,
    pub meta: EstimateMeta,
    /// Check-specific scalars (orders, per-level distances, ...).
    pub extra: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, meta: EstimateMeta) -> Self {
        self.meta = meta;
        self
    }

    pub(crate) fn set_sides(&mut self, lhs: (f64, f64), rhs: (f64, f64)) {
        self.lhs = lhs.0;
        self.lhs_se = lhs.1;
        self.rhs = rhs.0;
        self.rhs_se = rhs.1;
        self.measured_ratio = ratio(lhs.0, rhs.0);
    }
}

/// `lhs / rhs` with `0 / 0 = 0`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}
