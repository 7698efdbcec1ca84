use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time discretization of `[0, T]`.
///
/// Nodes are `t_0 = 0 < t_1 < ... < t_n = T`; step `i` is the interval
/// `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` intervals of length `horizon / n_steps`.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        let dt = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
        // Pin the endpoint so that t_n == T bit-for-bit.
        times[n_steps] = horizon;
        Ok(Self { times })
    }

    /// Arbitrary grid; `times` must start at 0 and be strictly increasing.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument(
                "a grid needs at least two nodes".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid must start at 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grid times must be strictly increasing and finite ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn time(&self, node: usize) -> f64 {
        self.times[node]
    }

    #[inline]
    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Keep every `factor`-th node. `factor` must divide `n_steps`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps() % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps()
            )));
        }
        Ok(Self {
            times: self.times.iter().step_by(factor).copied().collect(),
        })
    }
}

/// Uniform grid constructor matching the CLI's `(T, n_steps)` pair.
pub fn make_time_grid(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_unit_horizon() {
        let g = make_time_grid(1.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.steps(), vec![0.25; 4]);
    }

    #[test]
    fn single_step() {
        let g = make_time_grid(2.0, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 2.0]);
    }

    #[test]
    fn degenerate_horizon_rejected() {
        assert!(matches!(
            make_time_grid(0.0, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(make_time_grid(-1.0, 4).is_err());
        assert!(make_time_grid(1.0, 0).is_err());
        assert!(make_time_grid(f64::NAN, 3).is_err());
    }

    #[test]
    fn steps_sum_to_horizon() {
        let g = make_time_grid(0.7, 13).unwrap();
        let total: f64 = g.steps().iter().sum();
        assert!((total - 0.7).abs() < 1e-14);
        assert_eq!(g.horizon(), 0.7);
    }

    #[test]
    fn non_uniform_validation() {
        assert!(TimeGrid::from_times(vec![0.0, 0.1, 0.5, 1.0]).is_ok());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![0.0]).is_err());
    }

    #[test]
    fn coarsen_keeps_every_other_node() {
        let g = make_time_grid(1.0, 8).unwrap();
        let c = g.coarsen(2).unwrap();
        assert_eq!(c.n_steps(), 4);
        assert_eq!(c.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.coarsen(3).is_err());
    }
}
