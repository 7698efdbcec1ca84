//! Convergence of the localized solutions as the level grows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{EstimateMeta, EstimateReport};
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::norms::e_distance;
use crate::problem::{ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::solver::{localize_generator, solve_backward, Coupling, RegressionConfig};

/// Relative Monte Carlo slack on the nonincreasing-sequence checks.
pub const LOCALIZATION_SLACK: f64 = 0.1;
/// Last distance must be below this multiple of the solver tolerance once
/// the top level exceeds `max a` on the ensemble.
pub const LOCALIZATION_TOL_MULTIPLE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub levels: Vec<f64>,
    /// `E^2_beta` distance between the solutions of consecutive levels.
    pub distances: Vec<f64>,
    /// `E sum e^{beta A} |f_n - f_m|^2 / a^2 dt` between consecutive levels,
    /// evaluated along the solution of the higher level.
    pub driver_discrepancy: Vec<f64>,
    /// Whether the two top levels exceed `max a` on the ensemble, so that
    /// the last distance must vanish.
    pub bounded: bool,
    pub report: EstimateReport,
}

fn nonincreasing(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] > (1.0 + LOCALIZATION_SLACK) * w[0]).count()
}

fn driver_discrepancy(
    lo: &ProblemSpec,
    hi: &ProblemSpec,
    sol: &DiscreteSolution,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    beta: f64,
) -> f64 {
    let (np, n, d) = (ensemble.n_paths(), ensemble.n_steps(), lo.dim_d);
    let grid = ensemble.grid();
    let total: f64 = (0..np)
        .into_par_iter()
        .map(|p| {
            let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
            (0..n)
                .map(|i| {
                    let site = lo.site(ensemble, p, i);
                    let (y, z, u) = (sol.y(p, i), sol.z(p, i), sol.u(p, i));
                    (lo.generator)(&site, y, z, u, &mut a);
                    (hi.generator)(&site, y, z, u, &mut b);
                    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                    let ai = weights.a(p, i);
                    (beta * weights.big_a(p, i)).exp() * diff / (ai * ai) * grid.dt(i)
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / np as f64
}

/// Solves the problem localized at each level (explicit backward scheme)
/// and compares consecutive levels. Passes when both sequences are
/// nonincreasing within [`LOCALIZATION_SLACK`] and, if the two top levels
/// exceed `max a`, the last distance is below
/// `LOCALIZATION_TOL_MULTIPLE * cfg.implicit_tol`.
pub fn verify_localization_convergence(
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    cfg: &RegressionConfig,
    levels: &[f64],
    beta: f64,
) -> Result<LocalizationReport> {
    if problem.p < 2.0 {
        return Err(Error::InvalidArgument(format!("localization study needs p >= 2, got {}", problem.p)));
    }
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("levels must be increasing, at least two".into()));
    }
    let problems = levels
        .iter()
        .map(|n| localize_generator(problem, weights, *n))
        .collect::<Result<Vec<_>>>()?;
    let sols = problems
        .iter()
        .map(|pr| solve_backward(pr, ensemble, weights, cfg, Coupling::Explicit))
        .collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::new();
    let mut driver = Vec::new();
    for k in 0..levels.len() - 1 {
        distances.push(e_distance(&sols[k + 1], &sols[k], weights, ensemble, 2.0, beta)?);
        driver.push(driver_discrepancy(&problems[k], &problems[k + 1], &sols[k + 1], ensemble, weights, beta));
    }
    let bounded = weights.max_a() < levels[levels.len() - 2];
    let last = *distances.last().expect("two levels");
    let mut rep = EstimateReport::new("localization");
    rep.set_sides((last, 0.0), (distances[0], 0.0));
    rep.constant = Some(1.0 + LOCALIZATION_SLACK);
    rep.samples = distances.len();
    rep.violations = nonincreasing(&distances) + nonincreasing(&driver);
    if bounded && last >= LOCALIZATION_TOL_MULTIPLE * cfg.implicit_tol {
        rep.violations += 1;
    }
    rep.passed = rep.violations == 0;
    for (i, (d, f)) in distances.iter().zip(&driver).enumerate() {
        rep.extra.insert(format!("distance_{i}"), *d);
        rep.extra.insert(format!("driver_discrepancy_{i}"), *f);
    }
    rep.extra.insert("max_a".into(), weights.max_a());
    rep.meta = EstimateMeta {
        p: problem.p,
        beta,
        n_paths: ensemble.n_paths(),
        n_steps: ensemble.n_steps(),
        problems: vec![problem.name.clone()],
    };
    if distances.iter().chain(&driver).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { component: "localization distance" });
    }
    Ok(LocalizationReport {
        levels: levels.to_vec(),
        distances,
        driver_discrepancy: driver,
        bounded,
        report: rep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, compute_weight_paths, Coefficients, Site};
    use std::sync::Arc;

    #[test]
    fn inactive_localization_gives_zero() {
        let mut prob = builtins::builtin("state_localization").unwrap();
        prob.coefficients = Coefficients::constant(-0.25, 0.0, 0.0, 1.0, 1.0);
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 200, 1).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        assert!((w.max_a() - 1.0).abs() < 1e-15);
        let r = verify_localization_convergence(&prob, &ens, &w, &RegressionConfig::default(), &[2.0, 4.0], 1.0)
            .unwrap();
        assert_eq!(r.distances, vec![0.0]);
        assert_eq!(r.driver_discrepancy, vec![0.0]);
        assert!(r.bounded && r.report.passed);
    }

    #[test]
    fn level_above_sup_matches_unlocalized() {
        let mut prob = builtins::builtin("state_localization").unwrap();
        prob.coefficients = Coefficients {
            g_growth: Arc::new(|s: &Site| if s.t < 0.5 { 1.0 } else { 9.0 }),
            ..Coefficients::constant(-0.25, 0.0, 0.0, 1.0, 0.0)
        };
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 200, 2).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        assert!((w.max_a() - 3.0).abs() < 1e-15);
        let cfg = RegressionConfig::default();
        let plain = solve_backward(&prob, &ens, &w, &cfg, Coupling::Explicit).unwrap();
        let loc4 = localize_generator(&prob, &w, 4.0).unwrap();
        let s4 = solve_backward(&loc4, &ens, &w, &cfg, Coupling::Explicit).unwrap();
        assert_eq!(plain.y_block().as_slice(), s4.y_block().as_slice());
        let r = verify_localization_convergence(&prob, &ens, &w, &cfg, &[2.0, 4.0], 1.0).unwrap();
        assert!(r.distances[0] > 0.0);
        assert!(!r.bounded);
        let r = verify_localization_convergence(&prob, &ens, &w, &cfg, &[2.0, 4.0, 8.0], 1.0).unwrap();
        assert!(r.bounded);
        assert_eq!(r.distances[1], 0.0);
    }

    #[test]
    fn state_dependent_levels_decrease() {
        let prob = builtins::builtin("state_localization").unwrap();
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let ens = prob.simulate(&grid, 2000, 3).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let r = verify_localization_convergence(
            &prob,
            &ens,
            &w,
            &RegressionConfig::default(),
            &[1.0, 2.0, 4.0, 8.0],
            1.0,
        )
        .unwrap();
        assert!(r.report.passed, "{r:?}");
    }

    #[test]
    fn rejects_small_p_and_bad_levels() {
        let prob = builtins::builtin("state_localization").unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 4, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let cfg = RegressionConfig::default();
        assert!(verify_localization_convergence(&prob, &ens, &w, &cfg, &[2.0, 1.0], 1.0).is_err());
        let p15 = prob.clone().with_p(1.5);
        let w15 = compute_weight_paths(&p15, &ens).unwrap();
        assert!(verify_localization_convergence(&p15, &ens, &w15, &cfg, &[1.0, 2.0], 1.0).is_err());
    }
}
