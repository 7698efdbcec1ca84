use std::sync::Arc;

use super::{ProblemSpec, Site, WeightPaths};
use crate::driver::TimeGrid;
use crate::error::{Error, Result};
use crate::solution::DiscreteSolution;

/// Exponents above this overflow `exp` in double precision.
const MAX_EXPONENT: f64 = 700.0;

/// `log Gamma` on every node: `Gamma_0 = 1` and
/// `Gamma_{i+1} = Gamma_i * exp((alpha_i + eps a_i^2 + eps) dt_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPaths {
    n_nodes: usize,
    log_gamma: Vec<f64>,
}

impl GammaPaths {
    #[inline]
    pub fn log_gamma(&self, path: usize, node: usize) -> f64 {
        self.log_gamma[path * self.n_nodes + node]
    }

    #[inline]
    pub fn gamma(&self, path: usize, node: usize) -> f64 {
        self.log_gamma(path, node).exp()
    }
}

pub fn gamma_paths(weights: &WeightPaths, grid: &TimeGrid, eps: f64) -> Result<GammaPaths> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "transform epsilon must be finite and nonnegative, got {eps}"
        )));
    }
    let n = grid.n_steps();
    if weights.n_steps() != n {
        return Err(Error::InvalidArgument(format!(
            "weights cover {} steps, grid has {n}",
            weights.n_steps()
        )));
    }
    let mut log_gamma = Vec::with_capacity(weights.n_paths() * (n + 1));
    for path in 0..weights.n_paths() {
        let mut acc = 0.0;
        log_gamma.push(acc);
        for i in 0..n {
            let a = weights.a(path, i);
            acc += (weights.alpha(path, i) + eps * a * a + eps) * grid.dt(i);
            if acc.abs() > MAX_EXPONENT || !acc.is_finite() {
                return Err(Error::TransformOverflow {
                    path,
                    node: i + 1,
                    exponent: acc,
                });
            }
            log_gamma.push(acc);
        }
    }
    Ok(GammaPaths {
        n_nodes: n + 1,
        log_gamma,
    })
}

/// Problem for `(Gamma Y, Gamma Z, Gamma U)`: terminal `Gamma_T xi` and
/// generator `Gamma f(y / Gamma, z / Gamma, u / Gamma) - c y` with
/// `c = alpha + eps a^2 + eps`, so the monotonicity coefficient becomes
/// `-eps a^2 - eps` while the Lipschitz coefficients are unchanged.
///
/// The generator reads `Gamma` at the left node of the evaluation step, hence
/// the returned problem is tied to the ensemble `weights` were computed on.
pub fn gamma_transform(
    problem: &ProblemSpec,
    weights: &WeightPaths,
    grid: &TimeGrid,
    eps: f64,
) -> Result<ProblemSpec> {
    let gp = Arc::new(gamma_paths(weights, grid, eps)?);
    let n = grid.n_steps();
    let coeffs = problem.coefficients.clone();
    let rate = {
        let coeffs = coeffs.clone();
        move |site: &Site| {
            let lz = (coeffs.lipschitz_z)(site);
            let lu = (coeffs.lipschitz_u)(site);
            let g = (coeffs.g_growth)(site);
            let a2 = g + lz * lz + lu * lu;
            (coeffs.alpha)(site) + eps * a2 + eps
        }
    };
    let rate = Arc::new(rate);
    let inner = problem.generator.clone();
    let gen_gp = gp.clone();
    let gen_rate = rate.clone();
    let generator = Arc::new(
        move |site: &Site, y: &[f64], z: &[f64], u: &[f64], out: &mut [f64]| {
            let gamma = match (site.path, site.step) {
                (Some(p), Some(i)) => gen_gp.gamma(p, i),
                _ => 1.0,
            };
            let inv = 1.0 / gamma;
            let ys: Vec<f64> = y.iter().map(|v| v * inv).collect();
            let zs: Vec<f64> = z.iter().map(|v| v * inv).collect();
            let us: Vec<f64> = u.iter().map(|v| v * inv).collect();
            inner(site, &ys, &zs, &us, out);
            let c = gen_rate(site);
            for (o, yv) in out.iter_mut().zip(y) {
                *o = gamma * *o - c * yv;
            }
        },
    );
    let inner_terminal = problem.terminal.clone();
    let term_gp = gp.clone();
    let terminal = Arc::new(move |site: &super::TerminalSite, out: &mut [f64]| {
        inner_terminal(site, out);
        if let Some(p) = site.path {
            let g = term_gp.gamma(p, n);
            for o in out.iter_mut() {
                *o *= g;
            }
        }
    });
    let mut coefficients = coeffs.clone();
    let alpha_rate = rate.clone();
    let alpha_inner = coeffs.alpha.clone();
    coefficients.alpha = Arc::new(move |site: &Site| alpha_inner(site) - alpha_rate(site));
    let mut out = problem.clone();
    out.name = format!("{}/gamma(eps={eps})", problem.name);
    out.generator = generator;
    out.terminal = terminal;
    out.coefficients = coefficients;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(Y, Z, U) -> Gamma (Y, Z, U)`.
    Forward,
    /// `(Y, Z, U) -> (Y, Z, U) / Gamma`.
    Inverse,
}

/// Multiplies (or divides) every component by `Gamma` at its node; step
/// quantities use the left node.
pub fn gamma_apply(
    solution: &DiscreteSolution,
    weights: &WeightPaths,
    eps: f64,
    direction: Direction,
) -> Result<DiscreteSolution> {
    let gp = gamma_paths(weights, solution.grid(), eps)?;
    let mut out = solution.clone();
    let n = solution.n_steps();
    for p in 0..solution.n_paths() {
        for node in 0..=n {
            let s = match direction {
                Direction::Forward => gp.gamma(p, node),
                Direction::Inverse => (-gp.log_gamma(p, node)).exp(),
            };
            for v in out.y_mut(p, node) {
                *v *= s;
            }
            if node < n {
                for v in out.z_mut(p, node) {
                    *v *= s;
                }
                for v in out.u_mut(p, node) {
                    *v *= s;
                }
            }
        }
    }
    Ok(out)
}
