//! Executes a config: simulate, solve, then every requested check.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Check, CheckConfig, ExperimentConfig, ItoProcess};
use crate::driver::{PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::norms::{check_remark21, e_distance, norm_table, NormEstimate};
use crate::problem::{builtins, compute_weight_paths, probe_conditions, ProbePlan, ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::solver::{
    bsde_residual, picard_iterate, solve_backward, Coupling, PicardTrace, RegressionConfig, ResidualStats,
};
use crate::tolerances::*;
use crate::verify::{
    apriori_check, apriori_homogeneity, contraction_ladder, contraction_threshold, ito_refinement, random_solution,
    standard_pairs, verify_ito_formula, verify_lemma31, verify_lemma33, verify_localization_convergence, AprioriCase,
    AprioriInput, EstimateMeta, EstimateReport, SemimartingalePath,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub version: String,
    pub problem: String,
    /// `None` for suites, which mix several.
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardRecord {
    pub label: String,
    pub trace: PicardTrace,
}

/// Wall-clock seconds; kept out of `report.json` so reports stay comparable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub solve_seconds: f64,
    pub checks: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub meta: RunMeta,
    /// `None` for named suites.
    pub config: Option<ExperimentConfig>,
    pub norms: Vec<NormEstimate>,
    /// Sorted by name, one per requested check.
    pub checks: Vec<EstimateReport>,
    pub picard: Vec<PicardRecord>,
    pub residual: Option<ResidualStats>,
    #[serde(skip)]
    pub timing: Timing,
}

impl ReportBundle {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&EstimateReport> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Shared state of one run.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    problem: &'a ProblemSpec,
    ensemble: &'a PathEnsemble,
    weights: &'a WeightPaths,
    solution: &'a DiscreteSolution,
    residual: &'a ResidualStats,
    seed: u64,
}

impl Context<'_> {
    fn meta(&self) -> EstimateMeta {
        meta_of(self.problem, self.ensemble)
    }

    fn picard_budget(&self) -> usize {
        match self.cfg.scheme.picard.k_max {
            0 => PICARD_MAX_ITERATIONS,
            k => k,
        }
    }
}

/// The configured scheme: one explicit pass when `k_max = 0`, else Picard
/// from the zero triple.
pub(crate) fn solve(
    cfg: &ExperimentConfig,
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<(DiscreteSolution, Option<PicardTrace>)> {
    let sc = &cfg.scheme;
    if sc.picard.k_max == 0 {
        let sol = solve_backward(problem, ensemble, weights, &sc.regression, Coupling::Explicit)?;
        return Ok((sol, None));
    }
    let init = zeros_like(problem, ensemble);
    let (sol, trace) = picard_iterate(problem, ensemble, weights, &sc.regression, &init, sc.picard.k_max, sc.picard.tol)?;
    Ok((sol, Some(trace)))
}

pub(crate) fn zeros_like(problem: &ProblemSpec, ensemble: &PathEnsemble) -> DiscreteSolution {
    DiscreteSolution::zeros(
        ensemble.grid(),
        ensemble.n_paths(),
        problem.dim_d,
        problem.dim_k,
        problem.n_marks(),
    )
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle> {
    let start = Instant::now();
    config.validate()?;
    let seed = config.seed()?;
    let problem = config.build_problem()?;
    let grid = TimeGrid::uniform(config.grid.horizon, config.grid.n_steps)?;
    let ensemble = problem.simulate(&grid, config.ensemble.n_paths, seed)?;
    let weights = compute_weight_paths(&problem, &ensemble)?;
    let (solution, trace) = solve(config, &problem, &ensemble, &weights)?;
    let norms = norm_table(&solution, &weights, &ensemble, problem.p, problem.beta)?;
    let residual = bsde_residual(&problem, &solution, &ensemble, &weights)?;
    let solve_seconds = start.elapsed().as_secs_f64();

    let ctx = Context {
        cfg: config,
        problem: &problem,
        ensemble: &ensemble,
        weights: &weights,
        solution: &solution,
        residual: &residual,
        seed,
    };
    let outcomes = config
        .checks
        .par_iter()
        .map(|c| {
            let label = c.label();
            let t = Instant::now();
            let (mut rep, traces) = run_check(&ctx, c).map_err(|e| e.in_check(&label))?;
            rep.name = label.clone();
            Ok((label, rep, traces, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut picard = Vec::new();
    if let Some(trace) = trace {
        picard.push(PicardRecord {
            label: "solve".into(),
            trace,
        });
    }
    let mut timing = Timing {
        solve_seconds,
        ..Timing::default()
    };
    let mut checks = Vec::with_capacity(outcomes.len());
    for (label, rep, traces, secs) in outcomes {
        timing.checks.insert(label, secs);
        checks.push(rep);
        picard.extend(traces);
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    picard.sort_by(|a, b| a.label.cmp(&b.label));
    timing.total_seconds = start.elapsed().as_secs_f64();
    Ok(ReportBundle {
        meta: RunMeta {
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            problem: problem.name.clone(),
            p: Some(problem.p),
            beta: Some(problem.beta),
            n_paths: ensemble.n_paths(),
            n_steps: ensemble.n_steps(),
            seed,
        },
        config: Some(config.clone()),
        norms,
        checks,
        picard,
        residual: Some(residual),
        timing,
    })
}

pub(crate) type Outcome = (EstimateReport, Vec<PicardRecord>);

fn run_check(ctx: &Context, c: &CheckConfig) -> Result<Outcome> {
    let (prob, ens, w, sol) = (ctx.problem, ctx.ensemble, ctx.weights, ctx.solution);
    let (p, beta) = (prob.p, prob.beta);
    let rep = match &c.check {
        Check::Residual => residual_report(ctx),
        Check::Norms => norms_report(ctx)?,
        Check::Oracle => {
            let name = ctx.cfg.problem.builtin.as_deref().unwrap_or_default();
            oracle_report(name, prob, sol, ens)?
        }
        Check::Probe { samples } => probe_report(prob, *samples, ctx.seed),
        Check::Remark21 { slack_sigmas } => check_remark21(sol, w, ens, p, beta, *slack_sigmas)?,
        Check::Lemma31 {
            samples,
            p_min,
            p_max,
            dim,
        } => verify_lemma31((*p_min, *p_max), *samples, *dim, ctx.seed)?,
        Check::Lemma33 => verify_lemma33(p, beta, sol, ens, w)?,
        Check::Ito { mu, process, coarsen } => ito_report(ctx, *mu, *process, coarsen)?,
        Check::Apriori { case, partner, lambda } => apriori_report(ctx, *case, partner.as_deref(), *lambda)?,
        Check::Contraction { rho, multiples } => {
            let pairs = standard_pairs(prob, ens, ctx.seed.wrapping_add(0xC0));
            let thr = contraction_threshold(p, *rho);
            let (mut rep, _) = contraction_ladder(prob, ens, w, &ctx.cfg.scheme.regression, thr, multiples, &pairs)?;
            rep.extra.insert("rho".into(), *rho);
            rep
        }
        Check::Localization { levels } => {
            verify_localization_convergence(prob, ens, w, &ctx.cfg.scheme.regression, levels, beta)?.report
        }
        Check::Uniqueness { scale } => {
            let budget = ctx.cfg.scheme.picard.k_max.max(UNIQUENESS_MAX_ITERATIONS);
            let reg = &ctx.cfg.scheme.regression;
            let seed = ctx.seed.wrapping_add(0x0DD);
            return uniqueness_outcome(prob, ens, w, reg, budget, ctx.cfg.scheme.picard.tol, *scale, seed, &c.label());
        }
        Check::Picard => {
            let reg = &ctx.cfg.scheme.regression;
            return picard_outcome(prob, ens, w, reg, ctx.picard_budget(), ctx.cfg.scheme.picard.tol, &c.label());
        }
    };
    Ok((rep, Vec::new()))
}

fn residual_report(ctx: &Context) -> EstimateReport {
    let r = ctx.residual;
    let xi = ctx.problem.terminal_values(ctx.ensemble).unwrap_or_default();
    let scale = (xi.iter().map(|v| v * v).sum::<f64>() / xi.len().max(1) as f64).sqrt();
    let mut rep = EstimateReport::new("residual").with_meta(ctx.meta());
    rep.set_sides((r.max, 0.0), (scale, 0.0));
    rep.samples = r.per_node.len();
    rep.passed = r.max.is_finite();
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("argmax_node".into(), r.argmax as f64);
    rep.extra.insert("initial".into(), r.per_node[0]);
    rep
}

fn norms_report(ctx: &Context) -> Result<EstimateReport> {
    let (p, beta) = (ctx.problem.p, ctx.problem.beta);
    let table = norm_table(ctx.solution, ctx.weights, ctx.ensemble, p, beta)?;
    let mut rep = EstimateReport::new("norms").with_meta(ctx.meta());
    let get = |label: &str| table.iter().find(|e| e.kind.label() == label).expect("all kinds");
    let (e, b) = (get("E_p"), get("B_p"));
    rep.set_sides((b.value, b.std_error), (e.value, e.std_error));
    rep.constant = Some(1.0);
    rep.samples = ctx.ensemble.n_paths();
    // B only drops terms of E
    rep.passed = table.iter().all(|e| e.value.is_finite()) && b.value <= e.value * (1.0 + 1e-12);
    rep.violations = usize::from(!rep.passed);
    for e in &table {
        rep.extra.insert(e.kind.label().to_string(), e.value);
        rep.extra.insert(format!("{}_se", e.kind.label()), e.std_error);
    }
    Ok(rep)
}

/// Oracle error metrics of a solution against the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleErrors {
    /// Max over nodes of `sqrt(mean |Y - Y*|^2)`.
    pub y: f64,
    /// Max over steps of the RMS error of `Z^{(1,1)}`.
    pub z: f64,
    /// Max over steps of the RMS error of `U(e_1)`, 0 without marks.
    pub u: f64,
    /// `|Y_0 - Y_0*| / |Y_0*|` averaged over paths.
    pub y0_relative: f64,
}

pub fn oracle_errors(name: &str, sol: &DiscreteSolution, ens: &PathEnsemble) -> Result<OracleErrors> {
    let exact = builtins::oracle_solution(name, ens)?;
    let (np, n) = (ens.n_paths(), ens.n_steps());
    let rms = |f: &dyn Fn(usize) -> f64| (((0..np).map(|p| f(p).powi(2)).sum::<f64>()) / np as f64).sqrt();
    let y = (0..=n)
        .map(|i| rms(&|p| sol.y(p, i)[0] - exact.y(p, i)[0]))
        .fold(0.0, f64::max);
    let z = (0..n)
        .map(|i| rms(&|p| sol.z(p, i)[0] - exact.z(p, i)[0]))
        .fold(0.0, f64::max);
    let u = if sol.n_marks() == 0 {
        0.0
    } else {
        (0..n)
            .map(|i| rms(&|p| sol.u(p, i)[0] - exact.u(p, i)[0]))
            .fold(0.0, f64::max)
    };
    let y0_relative = (0..np)
        .map(|p| {
            let e = exact.y(p, 0)[0];
            let err = (sol.y(p, 0)[0] - e).abs();
            if e == 0.0 {
                err
            } else {
                err / e.abs()
            }
        })
        .sum::<f64>()
        / np as f64;
    Ok(OracleErrors { y, z, u, y0_relative })
}

/// Oracle check: `Y` error below `ORACLE_Y_TOL * sqrt(T)`, `Z` and `U`
/// errors below their tolerances, and for `linear_y` the relative `Y_0`
/// error below `ORACLE_Y0_REL_TOL`. `lhs` is the `Y` error.
pub fn oracle_report(name: &str, prob: &ProblemSpec, sol: &DiscreteSolution, ens: &PathEnsemble) -> Result<EstimateReport> {
    let e = oracle_errors(name, sol, ens)?;
    let y_tol = ORACLE_Y_TOL * ens.grid().horizon().sqrt();
    let mut fails = [e.y < y_tol, e.z < ORACLE_Z_TOL, e.u < ORACLE_U_TOL]
        .iter()
        .filter(|ok| !**ok)
        .count();
    if name == "linear_y" && e.y0_relative >= ORACLE_Y0_REL_TOL {
        fails += 1;
    }
    let mut rep = EstimateReport::new(format!("oracle_{name}"));
    rep.set_sides((e.y, 0.0), (y_tol, 0.0));
    rep.constant = Some(1.0);
    rep.samples = ens.n_paths();
    rep.violations = fails;
    rep.passed = fails == 0;
    rep.extra.insert("y_error".into(), e.y);
    rep.extra.insert("z_error".into(), e.z);
    rep.extra.insert("u_error".into(), e.u);
    rep.extra.insert("y0_relative_error".into(), e.y0_relative);
    rep.meta = EstimateMeta {
        p: prob.p,
        beta: prob.beta,
        n_paths: ens.n_paths(),
        n_steps: ens.n_steps(),
        problems: vec![name.to_string()],
    };
    Ok(rep)
}

fn probe_report(prob: &ProblemSpec, samples: usize, seed: u64) -> EstimateReport {
    let plan = ProbePlan {
        n_samples: samples,
        seed,
        ..ProbePlan::default()
    };
    let cr = probe_conditions(prob, &plan);
    let mut rep = EstimateReport::new("probe");
    rep.samples = cr.checks.iter().map(|c| c.probes).sum();
    rep.violations = cr.checks.iter().map(|c| c.violations).sum();
    rep.passed = cr.admitted();
    rep.witness = cr
        .checks
        .iter()
        .find(|c| c.violations > 0)
        .map(|c| format!("{}: {}", c.hypothesis, serde_json::to_string(&c.witness).unwrap_or_default()));
    for c in &cr.checks {
        rep.extra.insert(format!("{}_violations", c.hypothesis), c.violations as f64);
    }
    rep.meta.p = prob.p;
    rep.meta.beta = prob.beta;
    rep.meta.problems = vec![prob.name.clone()];
    rep
}

/// `X = W^1`: zero drift, unit loading on the first Brownian coordinate.
pub fn brownian_process(ens: &PathEnsemble) -> Result<SemimartingalePath<'_>> {
    let (np, n, k, m) = (ens.n_paths(), ens.n_steps(), ens.dim_k(), ens.n_marks());
    let mut z = vec![0.0; np * n * k];
    z.iter_mut().step_by(k).for_each(|v| *v = 1.0);
    SemimartingalePath::new(ens, 1, vec![0.0; np], vec![0.0; np * n], z, vec![0.0; np * n * m])
}

/// `X = 1 + N^1` with drift `nu_1` cancelling the compensator.
pub fn counting_process(ens: &PathEnsemble) -> Result<SemimartingalePath<'_>> {
    let (np, n, k, m) = (ens.n_paths(), ens.n_steps(), ens.dim_k(), ens.n_marks());
    if m == 0 {
        return Err(Error::Precondition("the counting process needs at least one mark".into()));
    }
    let f = (0..np).flat_map(|p| (0..n).map(move |i| ens.nu(p, i)[0])).collect();
    let mut u = vec![0.0; np * n * m];
    u.iter_mut().step_by(m).for_each(|v| *v = 1.0);
    SemimartingalePath::new(ens, 1, vec![1.0; np], f, vec![0.0; np * n * k], u)
}

fn ito_report(ctx: &Context, mu: f64, process: ItoProcess, coarsen: &[usize]) -> Result<EstimateReport> {
    let prob = ctx.problem;
    let (p, beta) = (prob.p, prob.beta);
    let ensembles = coarsen
        .iter()
        .map(|f| ctx.ensemble.coarsen(*f))
        .collect::<Result<Vec<_>>>()?;
    let weights = ensembles
        .iter()
        .map(|e| compute_weight_paths(prob, e))
        .collect::<Result<Vec<_>>>()?;
    let solutions = match process {
        ItoProcess::Solution => ensembles
            .iter()
            .zip(&weights)
            .map(|(e, w)| Ok(solve(ctx.cfg, prob, e, w)?.0))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let paths = ensembles
        .iter()
        .enumerate()
        .map(|(i, e)| match process {
            ItoProcess::Brownian => brownian_process(e),
            ItoProcess::Counting => counting_process(e),
            ItoProcess::Solution => SemimartingalePath::from_solution(prob, &solutions[i], e),
        })
        .collect::<Result<Vec<_>>>()?;
    if process == ItoProcess::Counting {
        let mut rep = EstimateReport::new("ito_exact").with_meta(ctx.meta());
        let mut worst = 0.0f64;
        for (x, w) in paths.iter().zip(&weights) {
            let r = verify_ito_formula(p, beta, mu, x, w)?;
            rep.extra.insert(format!("relative_n{:05}", w.n_steps()), r.relative);
            worst = worst.max(r.relative);
        }
        rep.set_sides((worst, 0.0), (ITO_EXACT_TOL, 0.0));
        rep.constant = Some(1.0);
        rep.samples = paths.len();
        rep.passed = worst < ITO_EXACT_TOL;
        rep.violations = usize::from(!rep.passed);
        return Ok(rep);
    }
    let levels: Vec<_> = paths.into_iter().zip(&weights).collect();
    let mut rep = ito_refinement(p, beta, mu, &levels)?;
    rep.meta.problems = vec![prob.name.clone()];
    Ok(rep)
}

fn apriori_report(ctx: &Context, case: AprioriCase, partner: Option<&str>, lambda: f64) -> Result<EstimateReport> {
    let (prob, ens, w) = (ctx.problem, ctx.ensemble, ctx.weights);
    let (p, beta) = (prob.p, prob.beta);
    let input = match partner {
        Some(name) if !matches!(case, AprioriCase::Cor42 | AprioriCase::Cor44) => {
            let other = builtins::builtin(name)?.with_p(p).with_beta(beta);
            let w2 = compute_weight_paths(&other, ens)?;
            let (s2, _) = solve(ctx.cfg, &other, ens, &w2)?;
            AprioriInput::from_pair(prob, ctx.solution, &other, &s2, ens)?
        }
        _ => AprioriInput::from_single(prob, ctx.solution, ens, w)?,
    };
    let mut rep = apriori_check(case, &input, p, beta, ens, w)?;
    let hom = apriori_homogeneity(case, &input, lambda, p, beta, ens, w)?;
    rep.violations += hom.violations;
    rep.passed = rep.passed && hom.passed;
    rep.extra.insert("homogeneity_lambda".into(), lambda);
    rep.extra
        .insert("homogeneity_max_relative_error".into(), hom.extra["max_relative_error"]);
    Ok(rep)
}

/// Picard from `init`; exhausting the budget yields an unconverged trace
/// instead of an error.
fn picard_traced(
    prob: &ProblemSpec,
    ens: &PathEnsemble,
    w: &WeightPaths,
    reg: &RegressionConfig,
    init: &DiscreteSolution,
    budget: usize,
    tol: f64,
) -> Result<(Option<DiscreteSolution>, PicardTrace)> {
    match picard_iterate(prob, ens, w, reg, init, budget, tol) {
        Ok((s, t)) => Ok((Some(s), t)),
        Err(Error::NotContracting {
            iterations,
            distances,
            ratios,
        }) => Ok((
            None,
            PicardTrace {
                distances,
                ratios,
                converged: false,
                iterations,
                tol,
            },
        )),
        Err(e) => Err(e),
    }
}

fn meta_of(prob: &ProblemSpec, ens: &PathEnsemble) -> EstimateMeta {
    EstimateMeta {
        p: prob.p,
        beta: prob.beta,
        n_paths: ens.n_paths(),
        n_steps: ens.n_steps(),
        problems: vec![prob.name.clone()],
    }
}

/// Picard runs from zero and from i.i.d. normal iterates of size `scale`;
/// passes when both converge and their limits are within
/// `UNIQUENESS_TOL_MULTIPLE * tol` in `E^p_beta`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn uniqueness_outcome(
    prob: &ProblemSpec,
    ens: &PathEnsemble,
    w: &WeightPaths,
    reg: &RegressionConfig,
    budget: usize,
    tol: f64,
    scale: f64,
    seed: u64,
    label: &str,
) -> Result<Outcome> {
    let zero = zeros_like(prob, ens);
    let random = random_solution(ens.grid(), ens.n_paths(), prob.dim_d, prob.dim_k, prob.n_marks(), scale, seed);
    let (a, ta) = picard_traced(prob, ens, w, reg, &zero, budget, tol)?;
    let (b, tb) = picard_traced(prob, ens, w, reg, &random, budget, tol)?;
    let bound = UNIQUENESS_TOL_MULTIPLE * tol;
    let d = match (&a, &b) {
        (Some(a), Some(b)) => e_distance(a, b, w, ens, prob.p, prob.beta)?,
        _ => f64::INFINITY,
    };
    let mut rep = EstimateReport::new(label).with_meta(meta_of(prob, ens));
    rep.set_sides((d, 0.0), (bound, 0.0));
    rep.constant = Some(1.0);
    rep.samples = ens.n_paths();
    rep.passed = d < bound;
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("iterations_zero".into(), ta.iterations as f64);
    rep.extra.insert("iterations_random".into(), tb.iterations as f64);
    rep.extra.insert("init_scale".into(), scale);
    let records = vec![
        PicardRecord {
            label: format!("{label}/random"),
            trace: tb,
        },
        PicardRecord {
            label: format!("{label}/zero"),
            trace: ta,
        },
    ];
    Ok((rep, records))
}

/// Picard from zero; passes when it converges within `budget` iterations.
pub(crate) fn picard_outcome(
    prob: &ProblemSpec,
    ens: &PathEnsemble,
    w: &WeightPaths,
    reg: &RegressionConfig,
    budget: usize,
    tol: f64,
    label: &str,
) -> Result<Outcome> {
    let (_, trace) = picard_traced(prob, ens, w, reg, &zeros_like(prob, ens), budget, tol)?;
    let mut rep = EstimateReport::new(label).with_meta(meta_of(prob, ens));
    rep.constant = Some(1.0);
    let last = trace.distances.last().copied().unwrap_or(0.0);
    rep.set_sides((last, 0.0), (tol, 0.0));
    rep.samples = trace.iterations;
    rep.passed = trace.converged && trace.iterations <= budget;
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("iterations".into(), trace.iterations as f64);
    rep.extra.insert("budget".into(), budget as f64);
    if let Some(r) = trace.tail_ratio() {
        rep.extra.insert("tail_ratio".into(), r);
    }
    Ok((
        rep,
        vec![PicardRecord {
            label: label.to_string(),
            trace,
        }],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text, "test").unwrap()
    }

    #[test]
    fn zero_problem_has_zero_residual() {
        let c = config(
            "[problem]\nbuiltin = \"zero\"\n[grid]\nn_steps = 8\n[ensemble]\nn_paths = 50\nseed = 1\n[[checks]]\nkind = \"residual\"\n",
        );
        let b = run_experiment(&c).unwrap();
        assert_eq!(b.checks.len(), 1);
        assert_eq!(b.checks[0].name, "residual");
        assert_eq!(b.checks[0].lhs, 0.0);
        assert!(b.all_passed());
    }

    #[test]
    fn brownian_terminal_norms_and_oracle() {
        let c = config(
            r#"
[problem]
builtin = "brownian_terminal"
[grid]
n_steps = 8
[ensemble]
n_paths = 2000
seed = 4
[[checks]]
kind = "norms"
[[checks]]
kind = "oracle"
[[checks]]
kind = "residual"
"#,
        );
        let b = run_experiment(&c).unwrap();
        let names: Vec<&str> = b.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["norms", "oracle", "residual"]);
        assert_eq!(b.norms.len(), 8);
        let oracle = &b.checks[1];
        // W_{i+1} = W_i + dW lies in the joint regression span
        assert!(oracle.passed, "{oracle:?}");
        assert!(oracle.extra["y_error"] < 1e-10 && oracle.extra["z_error"] < 1e-10, "{oracle:?}");
        // H_2 of Z = (1, 0) with a = 1, zeta = 1, beta = 1: E int e^{t} dt = e - 1
        let h = b.norms.iter().find(|e| e.kind.label() == "H_p").unwrap();
        let want = (1.0f64.exp() - 1.0).sqrt();
        assert!((h.value - want).abs() < 0.1, "{} vs {want}", h.value);
    }

    #[test]
    fn check_errors_name_the_check() {
        let c = config(
            "[problem]\nbuiltin = \"zero\"\n[grid]\nn_steps = 4\n[ensemble]\nn_paths = 10\nseed = 1\n[[checks]]\nname = \"my_lemma\"\nkind = \"lemma33\"\n",
        );
        let e = run_experiment(&c).unwrap_err().to_string();
        assert!(e.contains("my_lemma"), "{e}");
    }

    #[test]
    fn same_config_same_report() {
        let c = config(
            "[problem]\nbuiltin = \"jump_terminal\"\n[grid]\nn_steps = 8\n[ensemble]\nn_paths = 300\nseed = 2\n[[checks]]\nkind = \"norms\"\n[[checks]]\nkind = \"picard\"\n",
        );
        let a = serde_json::to_string(&run_experiment(&c).unwrap()).unwrap();
        let b = serde_json::to_string(&run_experiment(&c).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counting_ito_is_exact() {
        let c = config(
            "[problem]\nbuiltin = \"jump_terminal\"\np = 1.5\n[grid]\nn_steps = 16\n[ensemble]\nn_paths = 100\nseed = 3\n[[checks]]\nkind = \"ito\"\nprocess = \"counting\"\nmu = 0.5\ncoarsen = [2, 1]\n",
        );
        let b = run_experiment(&c).unwrap();
        assert!(b.checks[0].passed, "{:?}", b.checks[0]);
    }
}
