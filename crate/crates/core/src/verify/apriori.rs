//! A priori estimates: measured ratios of solution bundles to data bundles.

use serde::{Deserialize, Serialize};

use super::report::{ratio, EstimateMeta, EstimateReport};
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::norms::Functionals;
use crate::problem::{evaluate_generator, ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::stats::mean_se;

/// Largest admitted `max / min - 1` of the measured ratio across path counts.
pub const APRIORI_RATIO_STABILITY: f64 = 0.2;
/// Relative tolerance of the degree-`p` homogeneity check.
pub const APRIORI_HOMOGENEITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AprioriCase {
    /// Difference of two solutions, `p = 2`.
    P2,
    /// Difference, `p > 2`, `Y` part.
    #[serde(rename = "Pgt2_Y")]
    Pgt2Y,
    /// Difference, `p > 2`, `(Z, U)` part with `(p - 1) beta` data weights.
    #[serde(rename = "Pgt2_ZU")]
    Pgt2ZU,
    /// Difference, `p` in `(1, 2)`, first generator free of `u`.
    Plt2,
    /// Single solution against `(xi, varphi)`, `p >= 2`.
    Cor42,
    /// Single solution against `(xi, varphi)`, `p` in `(1, 2)`, `u`-free generator.
    Cor44,
}

impl AprioriCase {
    pub const ALL: [AprioriCase; 6] = [
        AprioriCase::P2,
        AprioriCase::Pgt2Y,
        AprioriCase::Pgt2ZU,
        AprioriCase::Plt2,
        AprioriCase::Cor42,
        AprioriCase::Cor44,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AprioriCase::P2 => "P2",
            AprioriCase::Pgt2Y => "Pgt2_Y",
            AprioriCase::Pgt2ZU => "Pgt2_ZU",
            AprioriCase::Plt2 => "Plt2",
            AprioriCase::Cor42 => "Cor42",
            AprioriCase::Cor44 => "Cor44",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown a priori case `{s}`")))
    }

    fn check_p(self, p: f64) -> Result<()> {
        let ok = match self {
            AprioriCase::P2 => (p - 2.0).abs() < 1e-12,
            AprioriCase::Pgt2Y | AprioriCase::Pgt2ZU => p > 2.0,
            AprioriCase::Cor42 => p >= 2.0,
            AprioriCase::Plt2 | AprioriCase::Cor44 => p > 1.0 && p < 2.0,
        };
        if ok && p.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("case {} does not apply to p = {p}", self.label())))
        }
    }

    fn needs_u_free(self) -> bool {
        matches!(self, AprioriCase::Plt2 | AprioriCase::Cor44)
    }
}

/// Solution side and data side of one a priori display.
///
/// For difference cases `solution` is `(Y^1 - Y^2, ...)`, `xi` holds
/// `|xi_1 - xi_2|` per path and `driver` holds `|f_1 - f_2|` at
/// `(t, Y^2, Z^2, U^2)` per path and step. For single-solution cases
/// `solution` is the solution itself, `xi = |xi|` and `driver = varphi`.
#[derive(Debug, Clone)]
pub struct AprioriInput {
    pub solution: DiscreteSolution,
    pub xi: Vec<f64>,
    pub driver: Vec<f64>,
    /// Whether the first generator depends on `u`.
    pub depends_on_u: bool,
    pub problems: Vec<String>,
}

fn abs(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl AprioriInput {
    /// Difference data of two solutions on one ensemble.
    pub fn from_pair(
        problem_1: &ProblemSpec,
        solution_1: &DiscreteSolution,
        problem_2: &ProblemSpec,
        solution_2: &DiscreteSolution,
        ensemble: &PathEnsemble,
    ) -> Result<Self> {
        problem_1.check_ensemble(ensemble)?;
        problem_2.check_ensemble(ensemble)?;
        let diff = solution_1.difference(solution_2)?;
        let (np, n, d) = (ensemble.n_paths(), ensemble.n_steps(), problem_1.dim_d);
        let (x1, x2) = (problem_1.terminal_values(ensemble)?, problem_2.terminal_values(ensemble)?);
        let xi = (0..np)
            .map(|p| {
                let a: Vec<f64> = (0..d).map(|c| x1[p * d + c] - x2[p * d + c]).collect();
                abs(&a)
            })
            .collect();
        let mut driver = Vec::with_capacity(np * n);
        for p in 0..np {
            for i in 0..n {
                let site = problem_1.site(ensemble, p, i);
                let (y, z, u) = (solution_2.y(p, i), solution_2.z(p, i), solution_2.u(p, i));
                let f1 = evaluate_generator(problem_1, &site, y, z, u)?;
                let f2 = evaluate_generator(problem_2, &site, y, z, u)?;
                let a: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
                driver.push(abs(&a));
            }
        }
        Ok(Self {
            solution: diff,
            xi,
            driver,
            depends_on_u: problem_1.depends_on_u,
            problems: vec![problem_1.name.clone(), problem_2.name.clone()],
        })
    }

    /// One solution against its terminal value and the growth process
    /// `varphi` of `weights`.
    pub fn from_single(
        problem: &ProblemSpec,
        solution: &DiscreteSolution,
        ensemble: &PathEnsemble,
        weights: &WeightPaths,
    ) -> Result<Self> {
        problem.check_ensemble(ensemble)?;
        let (np, n, d) = (ensemble.n_paths(), ensemble.n_steps(), problem.dim_d);
        let x = problem.terminal_values(ensemble)?;
        Ok(Self {
            solution: solution.clone(),
            xi: (0..np).map(|p| abs(&x[p * d..(p + 1) * d])).collect(),
            driver: (0..np).flat_map(|p| (0..n).map(move |i| (p, i))).map(|(p, i)| weights.phi(p, i)).collect(),
            depends_on_u: problem.depends_on_u,
            problems: vec![problem.name.clone()],
        })
    }

    /// Every solution and data component multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            solution: self.solution.scaled(lambda),
            xi: self.xi.iter().map(|v| v * lambda.abs()).collect(),
            driver: self.driver.iter().map(|v| v * lambda.abs()).collect(),
            depends_on_u: self.depends_on_u,
            problems: self.problems.clone(),
        }
    }
}

/// Pathwise solution and data bundles `(L_path, R_path)` of a display.
pub fn apriori_bundles(
    case: AprioriCase,
    input: &AprioriInput,
    p: f64,
    beta: f64,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<(Vec<f64>, Vec<f64>)> {
    case.check_p(p)?;
    if case.needs_u_free() && input.depends_on_u {
        return Err(Error::Precondition(format!(
            "case {} requires the first generator not to depend on u (problems {:?})",
            case.label(),
            input.problems
        )));
    }
    let (np, n) = (ensemble.n_paths(), ensemble.n_steps());
    if input.xi.len() != np || input.driver.len() != np * n {
        return Err(Error::InvalidArgument("a priori data are not aligned with the ensemble".into()));
    }
    input.solution.check_finite()?;
    let f = Functionals::new(&input.solution, weights, ensemble, beta)?;
    let grid = ensemble.grid();
    let h = p / 2.0;
    let zu = |path: usize| {
        f.z_quad(path, 1.0).powf(h) + f.u_compensator(path, 1.0).powf(h) + f.u_jumps(path, 1.0).powf(h)
    };
    let lhs = f.collect(|path| match case {
        AprioriCase::P2 => {
            f.sup_y(path, 2.0, 1.0) + f.sum_y_da(path, 2.0, 1.0) + f.z_quad(path, 1.0) + f.u_compensator(path, 1.0)
        }
        AprioriCase::Pgt2Y | AprioriCase::Cor42 => f.sup_y(path, p, 1.0) + f.sum_y_da(path, p, 1.0),
        AprioriCase::Pgt2ZU => zu(path),
        AprioriCase::Plt2 => f.sup_y(path, p, h) + f.sum_y_da(path, p, h) + zu(path),
        AprioriCase::Cor44 => f.sup_y(path, p, h) + zu(path),
    });
    // (terminal weight, driver weight) exponents in units of beta A
    let (c_xi, c_f) = match case {
        AprioriCase::P2 | AprioriCase::Pgt2Y | AprioriCase::Cor42 => (1.0, 1.0),
        AprioriCase::Pgt2ZU => (p - 1.0, p - 1.0),
        AprioriCase::Plt2 | AprioriCase::Cor44 => (h, 1.0),
    };
    let rhs = f.collect(|path| {
        let term = f.weight(c_xi, path, n) * input.xi[path].powf(p);
        let drv: f64 = (0..n)
            .map(|i| f.weight(c_f, path, i) * input.driver[path * n + i].powf(p) * grid.dt(i))
            .sum();
        term + drv
    });
    if lhs.iter().chain(&rhs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { component: "a priori bundle" });
    }
    Ok((lhs, rhs))
}

fn meta(input: &AprioriInput, p: f64, beta: f64, ensemble: &PathEnsemble) -> EstimateMeta {
    EstimateMeta {
        p,
        beta,
        n_paths: ensemble.n_paths(),
        n_steps: ensemble.n_steps(),
        problems: input.problems.clone(),
    }
}

/// Monte Carlo means of both bundles and their ratio. No explicit constant
/// exists, so the check passes when the ratio is finite (or `0 / 0`).
pub fn apriori_check(
    case: AprioriCase,
    input: &AprioriInput,
    p: f64,
    beta: f64,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<EstimateReport> {
    let (lhs, rhs) = apriori_bundles(case, input, p, beta, ensemble, weights)?;
    let mut rep = EstimateReport::new(format!("apriori_{}", case.label()));
    rep.set_sides(mean_se(&lhs), mean_se(&rhs));
    rep.samples = lhs.len();
    rep.passed = rep.measured_ratio.is_finite();
    rep.violations = usize::from(!rep.passed);
    rep.meta = meta(input, p, beta, ensemble);
    Ok(rep)
}

/// Scales the input by `lambda` and checks that both bundles scale by
/// `|lambda|^p` on every path, to relative [`APRIORI_HOMOGENEITY_TOL`].
pub fn apriori_homogeneity(
    case: AprioriCase,
    input: &AprioriInput,
    lambda: f64,
    p: f64,
    beta: f64,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<EstimateReport> {
    let (l1, r1) = apriori_bundles(case, input, p, beta, ensemble, weights)?;
    let (l2, r2) = apriori_bundles(case, &input.scaled(lambda), p, beta, ensemble, weights)?;
    let factor = lambda.abs().powf(p);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for (a, b) in l1.iter().zip(&l2).chain(r1.iter().zip(&r2)) {
        let want = factor * a;
        let err = (b - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        if (b - want).abs() > APRIORI_HOMOGENEITY_TOL * want.abs() {
            violations += 1;
        }
        if want != 0.0 || *b != 0.0 {
            worst = worst.max(err);
        }
    }
    let mut rep = EstimateReport::new(format!("apriori_{}_homogeneity", case.label()));
    rep.set_sides(mean_se(&l2), mean_se(&r2));
    rep.constant = Some(factor);
    rep.samples = l1.len() * 2;
    rep.violations = violations;
    rep.passed = violations == 0;
    rep.extra.insert("lambda".into(), lambda);
    rep.extra.insert("max_relative_error".into(), worst);
    rep.meta = meta(input, p, beta, ensemble);
    Ok(rep)
}

/// Checks that the data bundle vanishes and the solution bundle vanishes
/// with it when the data are zero.
pub fn apriori_zero_collapse(
    case: AprioriCase,
    input: &AprioriInput,
    p: f64,
    beta: f64,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<EstimateReport> {
    let (l, r) = apriori_bundles(case, input, p, beta, ensemble, weights)?;
    let mut rep = EstimateReport::new(format!("apriori_{}_zero_data", case.label()));
    rep.set_sides(mean_se(&l), mean_se(&r));
    rep.samples = l.len();
    rep.violations = l.iter().chain(&r).filter(|v| **v != 0.0).count();
    rep.passed = rep.violations == 0;
    rep.meta = meta(input, p, beta, ensemble);
    Ok(rep)
}

/// Compares the measured ratios of several reports (one per path count):
/// passes when `max / min - 1 < APRIORI_RATIO_STABILITY`.
pub fn apriori_ratio_stability(case: AprioriCase, reports: &[EstimateReport]) -> Result<EstimateReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("ratio stability needs at least two reports".into()));
    }
    let ratios: Vec<f64> = reports.iter().map(|r| r.measured_ratio).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(*r), b.max(*r)));
    let spread = if hi == 0.0 && lo == 0.0 { 0.0 } else { hi / lo - 1.0 };
    let mut rep = EstimateReport::new(format!("apriori_{}_ratio_stability", case.label()));
    rep.set_sides((hi, 0.0), (lo, 0.0));
    rep.measured_ratio = ratio(hi, lo);
    rep.constant = Some(1.0 + APRIORI_RATIO_STABILITY);
    rep.samples = reports.len();
    rep.passed = spread.is_finite() && spread >= 0.0 && spread < APRIORI_RATIO_STABILITY;
    rep.violations = usize::from(!rep.passed);
    for r in reports {
        rep.extra.insert(format!("ratio_n{:06}", r.meta.n_paths), r.measured_ratio);
    }
    rep.extra.insert("spread".into(), spread);
    rep.meta = reports.last().map(|r| r.meta.clone()).unwrap_or_default();
    Ok(rep)
}
