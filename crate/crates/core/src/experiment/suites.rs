//! Named suites with pre-committed seeds and sizes.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run::{
    brownian_process, counting_process, oracle_report, picard_outcome, uniqueness_outcome, Outcome,
    PicardRecord, ReportBundle, RunMeta, Timing,
};
use crate::driver::{PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::norms::check_remark21;
use crate::problem::{builtins, compute_weight_paths, probe_conditions, ProbePlan, ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::solver::{bsde_residual, q_n, solve_backward, Coupling, RegressionConfig};
use crate::stats::slope;
use crate::tolerances::*;
use crate::verify::{
    apriori_check, apriori_homogeneity, apriori_ratio_stability, apriori_zero_collapse, contraction_ladder,
    contraction_threshold, ito_refinement, standard_pairs, verify_ito_formula, verify_lemma31, verify_lemma33,
    verify_localization_convergence, AprioriCase, AprioriInput, EstimateMeta, EstimateReport, BETA_LADDER,
};

pub const SUITE_PATHS: usize = 10_000;
pub const SUITE_STEPS: usize = 64;

pub const ORACLE_SEEDS: [(&str, u64); 3] = [("brownian_terminal", 11), ("jump_terminal", 12), ("linear_y", 13)];
pub const LEMMA31_SEED: u64 = 21;
pub const LEMMA33_SEED: u64 = 22;
pub const REMARK21_SEED: u64 = 23;
pub const ITO_SEED: u64 = 24;
pub const APRIORI_SEED: u64 = 25;
pub const CONTRACTION_SEED: u64 = 31;
pub const UNIQUENESS_SEED: u64 = 32;
pub const LOCALIZATION_SEED: u64 = 41;
pub const TRUNCATION_SEED: u64 = 42;
pub const RESIDUAL_SEED: u64 = 43;

/// `p` is drawn from `(2, 6]`.
pub const LEMMA31_P_RANGE: (f64, f64) = (2.0 + 1e-9, 6.0);
pub const LEMMA31_SAMPLES: usize = 10_000;
pub const LEMMA31_DIM: usize = 3;
pub const LEMMA33_PS: [f64; 3] = [1.2, 1.5, 1.8];
pub const REMARK21_PS: [f64; 3] = [2.0, 3.0, 1.5];
pub const ITO_P: f64 = 1.5;
/// Steps of the finest Itô level and the coarsening factors below it.
pub const ITO_FINE_STEPS: usize = 512;
pub const ITO_COARSEN: [usize; 4] = [8, 4, 2, 1];
pub const ITO_PATHS: usize = 4000;
pub const APRIORI_CASES: [AprioriCase; 4] = [AprioriCase::P2, AprioriCase::Pgt2Y, AprioriCase::Pgt2ZU, AprioriCase::Plt2];
pub const APRIORI_PATHS: [usize; 3] = [1000, 4000, 16_000];
pub const APRIORI_LAMBDA: f64 = 2.0;
pub const CONTRACTION_PS: [f64; 2] = [1.5, 2.5];
pub const UNIQUENESS_INIT_SCALE: f64 = 3.0;
pub const LOCALIZATION_LEVELS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const RESIDUAL_FINE_STEPS: usize = 128;
pub const RESIDUAL_COARSEN: [usize; 4] = [8, 4, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracle,
    Inequalities,
    Contraction,
    Convergence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracle, Suite::Inequalities, Suite::Contraction, Suite::Convergence];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Inequalities => "inequalities",
            Suite::Contraction => "contraction",
            Suite::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown suite `{s}`; known: oracle, inequalities, contraction, convergence"
            ))
        })
    }
}

/// Overrides of the pre-committed sizes. A seed override `s` replaces
/// each built-in seed `k` by `s + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
}

impl SuiteOptions {
    pub fn paths(&self) -> usize {
        self.n_paths.unwrap_or(SUITE_PATHS)
    }

    pub fn steps(&self) -> usize {
        self.n_steps.unwrap_or(SUITE_STEPS)
    }

    pub fn seed(&self, builtin: u64) -> u64 {
        self.seed.map_or(builtin, |s| s.wrapping_add(builtin))
    }
}

struct Setup {
    problem: ProblemSpec,
    ensemble: PathEnsemble,
    weights: WeightPaths,
}

fn setup(problem: ProblemSpec, n_paths: usize, n_steps: usize, seed: u64) -> Result<Setup> {
    let grid = TimeGrid::uniform(1.0, n_steps)?;
    let ensemble = problem.simulate(&grid, n_paths, seed)?;
    let weights = compute_weight_paths(&problem, &ensemble)?;
    Ok(Setup {
        problem,
        ensemble,
        weights,
    })
}

impl Setup {
    fn solve(&self, reg: &RegressionConfig) -> Result<DiscreteSolution> {
        solve_backward(&self.problem, &self.ensemble, &self.weights, reg, Coupling::Explicit)
    }
}

// ---- oracle ----

/// Explicit solve with the degree-1 basis compared with the closed form.
pub fn oracle_check(name: &str, n_paths: usize, n_steps: usize, seed: u64) -> Result<EstimateReport> {
    let s = setup(builtins::builtin(name)?, n_paths, n_steps, seed)?;
    let sol = s.solve(&RegressionConfig::default())?;
    oracle_report(name, &s.problem, &sol, &s.ensemble)
}

pub fn oracle_suite(opts: &SuiteOptions) -> Result<Vec<EstimateReport>> {
    ORACLE_SEEDS
        .iter()
        .map(|(name, seed)| oracle_check(name, opts.paths(), opts.steps(), opts.seed(*seed)))
        .collect()
}

// ---- inequalities ----

pub fn lemma31_check(samples: usize, seed: u64) -> Result<EstimateReport> {
    verify_lemma31(LEMMA31_P_RANGE, samples, LEMMA31_DIM, seed)
}

/// One report per `p` in [`LEMMA33_PS`], along every jump of the solved
/// `jump_terminal` problem.
pub fn lemma33_checks(opts: &SuiteOptions) -> Result<Vec<EstimateReport>> {
    LEMMA33_PS
        .iter()
        .map(|p| {
            let prob = builtins::builtin("jump_terminal")?.with_p(*p);
            let s = setup(prob, opts.paths(), opts.steps(), opts.seed(LEMMA33_SEED))?;
            let sol = s.solve(&RegressionConfig::default())?;
            let mut rep = verify_lemma33(*p, s.problem.beta, &sol, &s.ensemble, &s.weights)?;
            rep.name = format!("lemma33_p{p}");
            Ok(rep)
        })
        .collect()
}

/// Compensator against jump sums of the solved `jump_terminal` `U` at each
/// `p` in [`REMARK21_PS`].
pub fn remark21_checks(opts: &SuiteOptions) -> Result<Vec<EstimateReport>> {
    let base = builtins::builtin("jump_terminal")?;
    let grid = TimeGrid::uniform(1.0, opts.steps())?;
    let ens = base.simulate(&grid, opts.paths(), opts.seed(REMARK21_SEED))?;
    let w2 = compute_weight_paths(&base, &ens)?;
    let sol = solve_backward(&base, &ens, &w2, &RegressionConfig::default(), Coupling::Explicit)?;
    REMARK21_PS
        .iter()
        .map(|p| {
            let prob = base.clone().with_p(*p);
            let w = compute_weight_paths(&prob, &ens)?;
            let mut rep = check_remark21(&sol, &w, &ens, *p, prob.beta, REMARK21_SLACK_SIGMAS)?;
            rep.name = format!("{}_p{p}", rep.name);
            Ok(rep)
        })
        .collect()
}

/// `X = 1 + N` on `jump_terminal`: the discrete identity must hold to
/// [`ITO_EXACT_TOL`] relative.
pub fn ito_exact_check(opts: &SuiteOptions) -> Result<EstimateReport> {
    let prob = builtins::builtin("jump_terminal")?.with_p(ITO_P);
    let s = setup(prob, opts.paths(), opts.steps(), opts.seed(ITO_SEED))?;
    let x = counting_process(&s.ensemble)?;
    let mu = ITO_P - 1.0;
    let r = verify_ito_formula(ITO_P, s.problem.beta, mu, &x, &s.weights)?;
    let mut rep = EstimateReport::new("ito_exact");
    rep.set_sides((r.relative, 0.0), (ITO_EXACT_TOL, 0.0));
    rep.constant = Some(1.0);
    rep.samples = s.ensemble.n_paths();
    rep.passed = r.relative < ITO_EXACT_TOL;
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("max_discrepancy".into(), r.max);
    rep.extra.insert("lhs_scale".into(), r.lhs_scale);
    rep.extra.insert("mu".into(), mu);
    rep.meta = EstimateMeta {
        p: ITO_P,
        beta: s.problem.beta,
        n_paths: s.ensemble.n_paths(),
        n_steps: s.ensemble.n_steps(),
        problems: vec![s.problem.name.clone()],
    };
    Ok(rep)
}

/// `X = W^1` with `beta = mu = 0` on 64 to 512 steps.
pub fn ito_refinement_check(n_paths: usize, seed: u64) -> Result<EstimateReport> {
    let prob = builtins::builtin("brownian_terminal")?.with_p(ITO_P);
    let grid = TimeGrid::uniform(1.0, ITO_FINE_STEPS)?;
    let fine = prob.simulate(&grid, n_paths, seed)?;
    let levels = ITO_COARSEN
        .iter()
        .map(|f| fine.coarsen(*f))
        .collect::<Result<Vec<_>>>()?;
    let weights = levels
        .iter()
        .map(|e| compute_weight_paths(&prob, e))
        .collect::<Result<Vec<_>>>()?;
    let paths = levels.iter().map(brownian_process).collect::<Result<Vec<_>>>()?;
    let input: Vec<_> = paths.into_iter().zip(&weights).collect();
    let mut rep = ito_refinement(ITO_P, 0.0, 0.0, &input)?;
    rep.meta.problems = vec![prob.name];
    Ok(rep)
}

/// `p` used for each a priori case.
pub fn apriori_p(case: AprioriCase) -> f64 {
    match case {
        AprioriCase::P2 => 2.0,
        AprioriCase::Pgt2Y | AprioriCase::Pgt2ZU | AprioriCase::Cor42 => 3.0,
        AprioriCase::Plt2 | AprioriCase::Cor44 => 1.5,
    }
}

fn pair_input(s: &Setup, other: &ProblemSpec) -> Result<AprioriInput> {
    let reg = RegressionConfig::default();
    let w2 = compute_weight_paths(other, &s.ensemble)?;
    let s1 = s.solve(&reg)?;
    let s2 = solve_backward(other, &s.ensemble, &w2, &reg, Coupling::Explicit)?;
    AprioriInput::from_pair(&s.problem, &s1, other, &s2, &s.ensemble)
}

/// Zero-data collapse, homogeneity and ratio stability for one case on
/// the pair `linear_pair_a`, `linear_pair_b`.
pub fn apriori_checks(case: AprioriCase, n_steps: usize, seed: u64) -> Result<Vec<EstimateReport>> {
    let p = apriori_p(case);
    let a = builtins::builtin("linear_pair_a")?.with_p(p);
    let b = builtins::builtin("linear_pair_b")?.with_p(p);
    let beta = a.beta;
    let mut out = Vec::new();
    let mut ratio_reports = Vec::new();
    for (k, n_paths) in APRIORI_PATHS.iter().enumerate() {
        let s = setup(a.clone(), *n_paths, n_steps, seed)?;
        let input = pair_input(&s, &b)?;
        if k == 0 {
            let same = pair_input(&s, &a)?;
            out.push(apriori_zero_collapse(case, &same, p, beta, &s.ensemble, &s.weights)?);
            out.push(apriori_homogeneity(case, &input, APRIORI_LAMBDA, p, beta, &s.ensemble, &s.weights)?);
        }
        ratio_reports.push(apriori_check(case, &input, p, beta, &s.ensemble, &s.weights)?);
    }
    out.push(apriori_ratio_stability(case, &ratio_reports)?);
    Ok(out)
}

pub fn inequalities_suite(opts: &SuiteOptions) -> Result<Vec<EstimateReport>> {
    let mut out = vec![lemma31_check(LEMMA31_SAMPLES, opts.seed(LEMMA31_SEED))?];
    out.extend(lemma33_checks(opts)?);
    out.extend(remark21_checks(opts)?);
    out.push(ito_exact_check(opts)?);
    out.push(ito_refinement_check(ITO_PATHS, opts.seed(ITO_SEED))?);
    for case in APRIORI_CASES {
        out.extend(apriori_checks(case, opts.steps(), opts.seed(APRIORI_SEED))?);
    }
    Ok(out)
}

// ---- contraction ----

fn lipschitz_z(p: f64, opts: &SuiteOptions) -> Result<Setup> {
    let prob = builtins::builtin("lipschitz_z")?
        .with_p(p)
        .with_beta(contraction_threshold(p, 1.0));
    setup(prob, opts.paths(), opts.steps(), opts.seed(CONTRACTION_SEED))
}

/// Factor ladder on `lipschitz_z` at [`BETA_LADDER`] multiples of the
/// threshold with `rho = 1`.
pub fn contraction_check(p: f64, opts: &SuiteOptions) -> Result<EstimateReport> {
    let s = lipschitz_z(p, opts)?;
    let pairs = standard_pairs(&s.problem, &s.ensemble, opts.seed(CONTRACTION_SEED) + 1);
    let reg = RegressionConfig::default();
    let (rep, _) = contraction_ladder(
        &s.problem,
        &s.ensemble,
        &s.weights,
        &reg,
        s.problem.beta,
        &BETA_LADDER,
        &pairs,
    )?;
    Ok(rep)
}

/// Picard on `lipschitz_z` at the threshold `beta`: at most
/// [`PICARD_MAX_ITERATIONS`] iterations to reach [`PICARD_TOL`].
pub fn picard_check(p: f64, opts: &SuiteOptions) -> Result<Outcome> {
    let s = lipschitz_z(p, opts)?;
    picard_outcome(
        &s.problem,
        &s.ensemble,
        &s.weights,
        &RegressionConfig::default(),
        PICARD_MAX_ITERATIONS,
        PICARD_TOL,
        &format!("picard_p{p}"),
    )
}

/// Builtins that pass the hypothesis probes.
pub fn admitted_builtins() -> Vec<&'static str> {
    let plan = ProbePlan {
        n_samples: 2000,
        ..ProbePlan::default()
    };
    builtins::BUILTIN_NAMES
        .iter()
        .copied()
        .filter(|n| builtins::builtin(n).is_ok_and(|p| probe_conditions(&p, &plan).admitted()))
        .collect()
}

/// Picard from zero and from a random start on every admitted builtin, at
/// `p = 2` and the threshold `beta`.
pub fn uniqueness_checks(opts: &SuiteOptions) -> Result<(Vec<EstimateReport>, Vec<PicardRecord>)> {
    let (mut reps, mut traces) = (Vec::new(), Vec::new());
    for (k, name) in admitted_builtins().into_iter().enumerate() {
        let prob = builtins::builtin(name)?;
        let beta = contraction_threshold(prob.p, 1.0);
        let prob = prob.with_beta(beta);
        let s = setup(prob, opts.paths(), opts.steps(), opts.seed(UNIQUENESS_SEED))?;
        let (rep, t) = uniqueness_outcome(
            &s.problem,
            &s.ensemble,
            &s.weights,
            &RegressionConfig::default(),
            UNIQUENESS_MAX_ITERATIONS,
            PICARD_TOL,
            UNIQUENESS_INIT_SCALE,
            opts.seed(UNIQUENESS_SEED) + 100 + k as u64,
            &format!("uniqueness_{name}"),
        )?;
        reps.push(rep);
        traces.extend(t);
    }
    Ok((reps, traces))
}

pub fn contraction_suite(opts: &SuiteOptions) -> Result<(Vec<EstimateReport>, Vec<PicardRecord>)> {
    let mut reps = Vec::new();
    let mut traces = Vec::new();
    for p in CONTRACTION_PS {
        reps.push(contraction_check(p, opts)?);
        let (r, t) = picard_check(p, opts)?;
        reps.push(r);
        traces.extend(t);
    }
    let (r, t) = uniqueness_checks(opts)?;
    reps.extend(r);
    traces.extend(t);
    Ok((reps, traces))
}

// ---- convergence ----

pub fn localization_check(opts: &SuiteOptions) -> Result<EstimateReport> {
    let s = setup(
        builtins::builtin("state_localization")?,
        opts.paths(),
        opts.steps(),
        opts.seed(LOCALIZATION_SEED),
    )?;
    let r = verify_localization_convergence(
        &s.problem,
        &s.ensemble,
        &s.weights,
        &RegressionConfig::default(),
        &LOCALIZATION_LEVELS,
        s.problem.beta,
    )?;
    Ok(r.report)
}

/// `|q_n(x)| <= n` and `q_n(x) = x` on `|x| <= n`, both exact, for random
/// `x` in dimensions 1 to 4 spanning three orders of magnitude.
pub fn truncation_check(samples: usize, seed: u64) -> EstimateReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut violations = 0;
    let mut witness = None;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let dim = rng.random_range(1..=4);
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let n: f64 = rng.random_range(1.0..10.0);
        let x: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let q = q_n(&x, n);
        let bad = norm(&q) > n || (norm(&x) <= n && q != x);
        worst = worst.max(norm(&q) / n);
        if bad {
            violations += 1;
            witness.get_or_insert_with(|| format!("n={n}, x={x:?}"));
        }
    }
    let mut rep = EstimateReport::new("truncation");
    rep.set_sides((worst, 0.0), (1.0, 0.0));
    rep.constant = Some(1.0);
    rep.samples = samples;
    rep.violations = violations;
    rep.passed = violations == 0;
    rep.witness = witness;
    rep
}

/// Max-node residual of `brownian_square` (degree-2 basis) on 16 to 128
/// steps; the fitted order in `dt` must be within [`RESIDUAL_ORDER_TOL`] of
/// [`RESIDUAL_ORDER_TARGET`].
pub fn residual_order_check(n_paths: usize, seed: u64) -> Result<EstimateReport> {
    let prob = builtins::builtin("brownian_square")?;
    let grid = TimeGrid::uniform(1.0, RESIDUAL_FINE_STEPS)?;
    let fine = prob.simulate(&grid, n_paths, seed)?;
    let reg = RegressionConfig::default().with_degree(2);
    let mut rep = EstimateReport::new("residual_order");
    let (mut log_dt, mut log_r) = (Vec::new(), Vec::new());
    for f in RESIDUAL_COARSEN {
        let ens = fine.coarsen(f)?;
        let w = compute_weight_paths(&prob, &ens)?;
        let sol = solve_backward(&prob, &ens, &w, &reg, Coupling::Explicit)?;
        let r = bsde_residual(&prob, &sol, &ens, &w)?;
        let n = ens.n_steps();
        rep.extra.insert(format!("residual_n{n:04}"), r.max);
        log_dt.push((1.0 / n as f64).ln());
        log_r.push(r.max.ln());
    }
    let order = slope(&log_dt, &log_r);
    rep.set_sides((order, 0.0), (RESIDUAL_ORDER_TARGET, 0.0));
    rep.constant = Some(1.0);
    rep.samples = RESIDUAL_COARSEN.len();
    rep.passed = (order - RESIDUAL_ORDER_TARGET).abs() <= RESIDUAL_ORDER_TOL;
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("order".into(), order);
    rep.meta = EstimateMeta {
        p: prob.p,
        beta: prob.beta,
        n_paths,
        n_steps: RESIDUAL_FINE_STEPS,
        problems: vec![prob.name.clone()],
    };
    Ok(rep)
}

pub fn convergence_suite(opts: &SuiteOptions) -> Result<Vec<EstimateReport>> {
    Ok(vec![
        localization_check(opts)?,
        truncation_check(TRUNCATION_SAMPLES, opts.seed(TRUNCATION_SEED)),
        residual_order_check(opts.paths(), opts.seed(RESIDUAL_SEED))?,
    ])
}

/// Runs a suite into a bundle shaped like a config run, with
/// `config = None`.
pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<ReportBundle> {
    let start = Instant::now();
    let (mut checks, mut picard) = match suite {
        Suite::Oracle => (oracle_suite(opts)?, Vec::new()),
        Suite::Inequalities => (inequalities_suite(opts)?, Vec::new()),
        Suite::Contraction => contraction_suite(opts)?,
        Suite::Convergence => (convergence_suite(opts)?, Vec::new()),
    };
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    picard.sort_by(|a, b| a.label.cmp(&b.label));
    if let Some(w) = checks.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(Error::InvalidArgument(format!("duplicate check name `{}`", w[0].name)));
    }
    let key = serde_json::to_vec(&(suite, opts)).expect("suite key serializes");
    let timing = Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        solve_seconds: 0.0,
        checks: BTreeMap::new(),
    };
    Ok(ReportBundle {
        meta: RunMeta {
            config_hash: hex::encode(Sha256::digest(&key)),
            version: env!("CARGO_PKG_VERSION").to_string(),
            problem: format!("suite:{}", suite.name()),
            p: None,
            beta: None,
            n_paths: opts.paths(),
            n_steps: opts.steps(),
            seed: opts.seed.unwrap_or(0),
        },
        config: None,
        norms: Vec::new(),
        checks,
        picard,
        residual: None,
        timing,
    })
}
