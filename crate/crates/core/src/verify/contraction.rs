//! Contraction factor of the Picard map `Phi` in the `B^p_beta` metric.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::report::{EstimateMeta, EstimateReport};
use crate::driver::{PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::norms::picard_distance;
use crate::problem::{ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::solver::{solve_backward, Coupling, RegressionConfig};

/// Multiples of the threshold `beta` used by the ladder study.
pub const BETA_LADDER: [f64; 5] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];
/// Monte Carlo slack (in standard errors) of the top-rung `factor < 1` check.
pub const CONTRACTION_SLACK_SIGMAS: f64 = 3.0;

/// `1 + 2 (p - 1) rho^{1 / (p - 1)}`.
pub fn contraction_threshold(p: f64, rho: f64) -> f64 {
    1.0 + 2.0 * (p - 1.0) * rho.powf(1.0 / (p - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub beta: f64,
    /// Largest `d(Phi a, Phi b) / d(a, b)` over the pairs.
    pub factor: f64,
    /// Delta-method standard error of the largest ratio.
    pub std_error: f64,
    pub per_pair: Vec<f64>,
    pub argmax: usize,
}

/// Iterates with i.i.d. standard normal entries times `scale`, for
/// contraction inputs and random Picard starts.
pub fn random_solution(
    grid: &TimeGrid,
    n_paths: usize,
    dim_d: usize,
    dim_k: usize,
    n_marks: usize,
    scale: f64,
    seed: u64,
) -> DiscreteSolution {
    let mut sol = DiscreteSolution::zeros(grid, n_paths, dim_d, dim_k, n_marks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, z, u) = sol.blocks_mut();
    for b in [y, z, u] {
        for v in b.as_mut_slice() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = scale * g;
        }
    }
    sol
}

/// Applies `Phi` (one backward solve with `(z, u)` frozen at the input) to
/// both members of every pair and returns the largest ratio of output to
/// input `B^p_beta` distances. Pairs at distance zero are a
/// [`Error::DegeneratePair`].
pub fn estimate_contraction_factor(
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    cfg: &RegressionConfig,
    beta: f64,
    pairs: &[(DiscreteSolution, DiscreteSolution)],
) -> Result<ContractionEstimate> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "contraction needs at least two input pairs, got {}",
            pairs.len()
        )));
    }
    let p = problem.p;
    let outputs = pairs
        .iter()
        .map(|(a, b)| {
            Ok((
                solve_backward(problem, ensemble, weights, cfg, Coupling::Frozen(a))?,
                solve_backward(problem, ensemble, weights, cfg, Coupling::Frozen(b))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    factor_from_outputs(pairs, &outputs, weights, ensemble, p, beta)
}

fn factor_from_outputs(
    pairs: &[(DiscreteSolution, DiscreteSolution)],
    outputs: &[(DiscreteSolution, DiscreteSolution)],
    weights: &WeightPaths,
    ensemble: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<ContractionEstimate> {
    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut ses = Vec::with_capacity(pairs.len());
    for (index, ((a, b), (fa, fb))) in pairs.iter().zip(outputs).enumerate() {
        let (d_in, se_in) = picard_distance(a, b, weights, ensemble, p, beta)?;
        if d_in == 0.0 {
            return Err(Error::DegeneratePair { index });
        }
        let (d_out, se_out) = picard_distance(fa, fb, weights, ensemble, p, beta)?;
        let r = d_out / d_in;
        let rel = if d_out > 0.0 { (se_out / d_out).powi(2) } else { 0.0 } + (se_in / d_in).powi(2);
        per_pair.push(r);
        ses.push(r * rel.sqrt());
    }
    let (argmax, factor) = per_pair
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    Ok(ContractionEstimate {
        beta,
        factor,
        std_error: ses[argmax],
        per_pair,
        argmax,
    })
}

/// Factor estimates at `threshold * m` for each multiple `m` in `multiples`
/// (increasing). `Phi` does not depend on `beta`, so the backward solves
/// are shared across rungs. Passes when the factors are nonincreasing and
/// the last is below `1` within [`CONTRACTION_SLACK_SIGMAS`].
pub fn contraction_ladder(
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    cfg: &RegressionConfig,
    threshold: f64,
    multiples: &[f64],
    pairs: &[(DiscreteSolution, DiscreteSolution)],
) -> Result<(EstimateReport, Vec<ContractionEstimate>)> {
    if multiples.is_empty() || multiples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ladder multiples must be increasing".into()));
    }
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("contraction needs at least two input pairs".into()));
    }
    let outputs = pairs
        .iter()
        .map(|(a, b)| {
            Ok((
                solve_backward(problem, ensemble, weights, cfg, Coupling::Frozen(a))?,
                solve_backward(problem, ensemble, weights, cfg, Coupling::Frozen(b))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let rungs = multiples
        .iter()
        .map(|m| factor_from_outputs(pairs, &outputs, weights, ensemble, problem.p, threshold * m))
        .collect::<Result<Vec<_>>>()?;
    let mut rep = EstimateReport::new(format!("contraction_p{}", problem.p));
    let top = rungs.last().expect("nonempty ladder");
    rep.set_sides((top.factor, top.std_error), (1.0, 0.0));
    rep.constant = Some(1.0);
    rep.slack_sigmas = CONTRACTION_SLACK_SIGMAS;
    rep.samples = rungs.len();
    let increases = rungs.windows(2).filter(|w| w[1].factor > w[0].factor).count();
    let top_ok = top.factor < 1.0 + CONTRACTION_SLACK_SIGMAS * top.std_error;
    rep.violations = increases + usize::from(!top_ok);
    rep.passed = rep.violations == 0;
    for (i, r) in rungs.iter().enumerate() {
        rep.extra.insert(format!("beta_{i}"), r.beta);
        rep.extra.insert(format!("factor_{i}"), r.factor);
    }
    rep.extra.insert("threshold".into(), threshold);
    rep.meta = EstimateMeta {
        p: problem.p,
        beta: threshold,
        n_paths: ensemble.n_paths(),
        n_steps: ensemble.n_steps(),
        problems: vec![problem.name.clone()],
    };
    Ok((rep, rungs))
}

/// Two input pairs: a zero iterate against a random one, and two random
/// iterates of different scales.
pub fn standard_pairs(problem: &ProblemSpec, ensemble: &PathEnsemble, seed: u64) -> Vec<(DiscreteSolution, DiscreteSolution)> {
    let (g, np, d, k, m) = (ensemble.grid(), ensemble.n_paths(), problem.dim_d, problem.dim_k, problem.n_marks());
    let zero = DiscreteSolution::zeros(g, np, d, k, m);
    vec![
        (zero, random_solution(g, np, d, k, m, 1.0, seed)),
        (
            random_solution(g, np, d, k, m, 0.5, seed.wrapping_add(1)),
            random_solution(g, np, d, k, m, 2.0, seed.wrapping_add(2)),
        ),
    ]
}
