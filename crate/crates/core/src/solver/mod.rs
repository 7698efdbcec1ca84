//! Backward regression scheme, Picard map, localization and residuals.

mod backward;
mod localize;
mod picard;
mod regression;
mod residual;

pub use backward::{solve_backward, Coupling};
pub use localize::{localize_generator, q_n, stopping_indices, truncate_data};
pub use picard::{picard_iterate, PicardTrace};
pub use regression::{regress_conditional_expectation, Projector, RegressionConfig};
pub use residual::{bsde_residual, ResidualStats};
