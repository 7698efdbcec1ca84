//! Monte Carlo laboratory for backward SDEs driven by a Brownian motion and
//! a finite-mark jump measure.
pub mod driver;
pub mod error;
pub mod experiment;
pub mod norms;
pub mod problem;
pub mod solution;
pub mod solver;
pub mod stats;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
