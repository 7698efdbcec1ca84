//! Reproducible simulation of the driving noises and the Markov factor.

mod block;
pub mod cache;
mod ensemble;
mod factor;
mod grid;
mod jumps;

pub use block::Block3;
pub use ensemble::{simulate_brownian, simulate_ensemble, simulate_factor, simulate_jumps, PathEnsemble};
pub use factor::{DiffusionFn, DriftFn, FactorSde, JumpCoefficientFn};
pub use grid::{make_time_grid, TimeGrid};
pub use jumps::{JumpMeasureSpec, RateFn};
