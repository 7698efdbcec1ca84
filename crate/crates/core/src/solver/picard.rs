use serde::{Deserialize, Serialize};

use super::backward::{solve_backward, Coupling};
use super::regression::RegressionConfig;
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::norms::picard_distance;
use crate::problem::{ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    /// `B^p_beta` distance between iterate `k + 1` and iterate `k`.
    pub distances: Vec<f64>,
    /// `distances[k + 1] / distances[k]`.
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub tol: f64,
}

impl PicardTrace {
    /// Mean of the last three ratios, `None` with fewer than one ratio.
    pub fn tail_ratio(&self) -> Option<f64> {
        let r: Vec<f64> = self.ratios.iter().rev().take(3).copied().collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

fn ratios(d: &[f64]) -> Vec<f64> {
    d.windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect()
}

/// Iterates `s^{k+1} = Phi(s^k)`, where `Phi` is one backward pass with the
/// generator's `(z, u)` frozen at those of `s^k`, starting from `init`.
/// Stops once the `B^p_beta` distance between successive iterates drops
/// below `tol`; exceeding `k_max` is a [`Error::NotContracting`].
pub fn picard_iterate(
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    cfg: &RegressionConfig,
    init: &DiscreteSolution,
    k_max: usize,
    tol: f64,
) -> Result<(DiscreteSolution, PicardTrace)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let (p, beta) = (problem.p, problem.beta);
    let mut current = init.clone();
    let mut distances = Vec::new();
    for k in 1..=k_max {
        let next = solve_backward(problem, ensemble, weights, cfg, Coupling::Frozen(&current))?;
        let (dist, _) = picard_distance(&next, &current, weights, ensemble, p, beta)?;
        distances.push(dist);
        current = next;
        if dist < tol {
            current.provenance.picard_iterations = k;
            let trace = PicardTrace {
                ratios: ratios(&distances),
                distances,
                converged: true,
                iterations: k,
                tol,
            };
            return Ok((current, trace));
        }
    }
    Err(Error::NotContracting {
        iterations: k_max,
        ratios: ratios(&distances),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, compute_weight_paths};
    use std::sync::Arc;

    fn setup(name: &str, paths: usize) -> (ProblemSpec, PathEnsemble, WeightPaths) {
        let prob = builtins::builtin(name).unwrap();
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let ens = prob.simulate(&grid, paths, 21).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        (prob, ens, w)
    }

    #[test]
    fn zu_free_generator_stops_after_second_pass() {
        let (prob, ens, w) = setup("monotone_cubic", 500);
        let init = DiscreteSolution::zeros(ens.grid(), 500, 1, 1, 1);
        let cfg = RegressionConfig::default();
        let (_, trace) = picard_iterate(&prob, &ens, &w, &cfg, &init, 5, 1e-10).unwrap();
        assert_eq!(trace.iterations, 2);
        assert_eq!(trace.distances[1], 0.0);
    }

    #[test]
    fn zero_fixed_point() {
        let (mut prob, ens, w) = setup("lipschitz_z", 200);
        prob.terminal = Arc::new(|_, out| out[0] = 0.0);
        let init = DiscreteSolution::zeros(ens.grid(), 200, 1, 1, 1);
        let (sol, trace) =
            picard_iterate(&prob, &ens, &w, &RegressionConfig::default(), &init, 3, 1e-12).unwrap();
        assert_eq!(trace.iterations, 1);
        assert!(sol.y_block().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_driver_contracts_geometrically() {
        let (prob, ens, w) = setup("lipschitz_z", 2000);
        let init = DiscreteSolution::zeros(ens.grid(), 2000, 1, 1, 1);
        let cfg = RegressionConfig::default().with_degree(2);
        let (_, trace) = picard_iterate(&prob, &ens, &w, &cfg, &init, 30, 1e-8).unwrap();
        assert!(trace.converged);
        assert!(trace.tail_ratio().unwrap() < 1.0, "{trace:?}");
        assert!(trace.ratios.iter().all(|r| *r < 1.0), "{trace:?}");
    }

    #[test]
    fn cap_reports_ratios() {
        let (prob, ens, w) = setup("lipschitz_z", 300);
        let init = DiscreteSolution::zeros(ens.grid(), 300, 1, 1, 1);
        match picard_iterate(&prob, &ens, &w, &RegressionConfig::default(), &init, 2, 1e-14) {
            Err(Error::NotContracting {
                iterations,
                distances,
                ratios,
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(distances.len(), 2);
                assert_eq!(ratios.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }
}
