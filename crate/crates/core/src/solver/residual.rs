use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// `sqrt(mean_paths |R_i|^2)` on every node.
    pub per_node: Vec<f64>,
    pub max: f64,
    pub argmax: usize,
}

/// Pathwise defect of the integral form
/// `R_i = Y_i - (xi + sum_{j>=i} f_j dt_j - sum_{j>=i} Z_j dW_j - sum_{j>=i} U_j dN~_j)`
/// with `f_j` evaluated at `(t_j, X_j, Y_j, Z_j, U_j)`.
pub fn bsde_residual(
    problem: &ProblemSpec,
    solution: &DiscreteSolution,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<ResidualStats> {
    problem.check_ensemble(ensemble)?;
    let (np, n) = (ensemble.n_paths(), ensemble.n_steps());
    if solution.n_paths() != np || solution.n_steps() != n || weights.n_paths() != np {
        return Err(Error::InvalidArgument(
            "solution, weights and ensemble are not aligned".into(),
        ));
    }
    let (d, k, m) = (problem.dim_d, problem.dim_k, problem.n_marks());
    let xi = problem.terminal_values(ensemble)?;
    let grid = ensemble.grid();
    let sq: Vec<Vec<f64>> = (0..np)
        .into_par_iter()
        .map(|p| {
            let mut out = vec![0.0; n + 1];
            let mut acc: Vec<f64> = xi[p * d..(p + 1) * d].to_vec();
            let mut f = vec![0.0; d];
            out[n] = solution
                .y(p, n)
                .iter()
                .zip(&acc)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            for i in (0..n).rev() {
                let site = problem.site(ensemble, p, i);
                let (z, u) = (solution.z(p, i), solution.u(p, i));
                (problem.generator)(&site, solution.y(p, i), z, u, &mut f);
                let dw = ensemble.dw(p, i);
                for a in 0..d {
                    let mut inc = f[a] * grid.dt(i);
                    for c in 0..k {
                        inc -= z[a * k + c] * dw[c];
                    }
                    for j in 0..m {
                        inc -= u[a * m + j] * ensemble.compensated(p, i, j);
                    }
                    acc[a] += inc;
                }
                out[i] = solution
                    .y(p, i)
                    .iter()
                    .zip(&acc)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
            out
        })
        .collect();
    let per_node: Vec<f64> = (0..=n)
        .map(|i| (sq.iter().map(|r| r[i]).sum::<f64>() / np as f64).sqrt())
        .collect();
    let (argmax, max) = per_node
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    if !max.is_finite() {
        return Err(Error::NonFinite { component: "residual" });
    }
    Ok(ResidualStats {
        per_node,
        max,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, compute_weight_paths};
    use crate::solver::{solve_backward, Coupling, RegressionConfig};
    use std::sync::Arc;

    #[test]
    fn constant_solution_has_zero_residual() {
        let mut prob = builtins::builtin("jump_terminal").unwrap();
        prob.terminal = Arc::new(|_, o| o[0] = 4.0);
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 100, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let mut sol = DiscreteSolution::zeros(&grid, 100, 1, 1, 1);
        for v in sol.blocks_mut().0.as_mut_slice() {
            *v = 4.0;
        }
        let r = bsde_residual(&prob, &sol, &ens, &w).unwrap();
        assert!(r.max < 1e-14);
    }

    #[test]
    fn oracle_martingale_is_exact() {
        let prob = builtins::builtin("jump_terminal").unwrap();
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 100, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let sol = builtins::oracle_solution("jump_terminal", &ens).unwrap();
        assert!(bsde_residual(&prob, &sol, &ens, &w).unwrap().max < 1e-12);
    }

    #[test]
    fn injected_fault_is_located() {
        let prob = builtins::builtin("brownian_terminal").unwrap();
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 400, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let mut sol =
            solve_backward(&prob, &ens, &w, &RegressionConfig::default(), Coupling::Explicit).unwrap();
        let clean = bsde_residual(&prob, &sol, &ens, &w).unwrap();
        sol.y_mut(17, 5)[0] += 1.0;
        let r = bsde_residual(&prob, &sol, &ens, &w).unwrap();
        // one path off by 1 adds about 1 / n_paths to the mean square
        assert!(r.per_node[5].powi(2) - clean.per_node[5].powi(2) >= 0.5 / 400.0);
        for i in (0..=8).filter(|&i| i != 5) {
            assert_eq!(r.per_node[i], clean.per_node[i]);
        }
    }
}
