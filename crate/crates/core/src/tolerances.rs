//! Pass thresholds of the acceptance criteria, in one place.

pub use crate::verify::{
    APRIORI_HOMOGENEITY_TOL, APRIORI_RATIO_STABILITY, CONTRACTION_SLACK_SIGMAS, ITO_MIN_ORDER, LEMMA31_QUAD_TOL,
    LEMMA31_SLACK, LEMMA33_REL_SLACK, LOCALIZATION_SLACK, LOCALIZATION_TOL_MULTIPLE,
};

/// Max over nodes of the RMS `Y` error, in units of `sqrt(T)`.
pub const ORACLE_Y_TOL: f64 = 1e-2;
/// Max over steps of the RMS error of `Z^{(1,1)}`.
pub const ORACLE_Z_TOL: f64 = 5e-2;
/// Max over steps of the RMS error of `U(e_1)`.
pub const ORACLE_U_TOL: f64 = 5e-2;
/// Relative error of `Y_0` for `linear_y`.
pub const ORACLE_Y0_REL_TOL: f64 = 1e-2;

pub const REMARK21_SLACK_SIGMAS: f64 = 3.0;

/// Relative discrepancy allowed on jump-only Itô cases.
pub const ITO_EXACT_TOL: f64 = 1e-10;

pub const PICARD_TOL: f64 = 1e-6;
pub const PICARD_MAX_ITERATIONS: usize = 10;

/// Two Picard limits must agree within this multiple of the Picard tolerance.
pub const UNIQUENESS_TOL_MULTIPLE: f64 = 5.0;
/// Iteration budget of the uniqueness runs.
pub const UNIQUENESS_MAX_ITERATIONS: usize = 50;

/// Residual order under step doubling: `|order - 0.5| <= 0.15`.
pub const RESIDUAL_ORDER_TARGET: f64 = 0.5;
pub const RESIDUAL_ORDER_TOL: f64 = 0.15;

/// `|q_n(x)| <= n` and `q_n(x) = x` for `|x| <= n` are checked on this many draws.
pub const TRUNCATION_SAMPLES: usize = 10_000;
