use rayon::prelude::*;

use super::regression::{Projector, RegressionConfig};
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, Site, WeightPaths};
use crate::solution::{DiscreteSolution, Provenance};

/// Where the generator takes its `(z, u)` arguments from.
#[derive(Debug, Clone, Copy)]
pub enum Coupling<'a> {
    /// The `(Z_i, U_i)` just estimated on the same step.
    Explicit,
    /// `(z_i, u_i)` of a supplied triple; its `Y` is ignored.
    Frozen(&'a DiscreteSolution),
}

/// Per-path outcome of the implicit equation `y = c + f(y) dt`.
enum Implicit {
    Converged(Vec<f64>),
    Failed { iterations: usize, lipschitz: f64 },
}

/// Overflow-safe Euclidean distance.
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.hypot(x - y))
}

#[allow(clippy::too_many_arguments)]
fn implicit_y(
    problem: &ProblemSpec,
    site: &Site,
    target: &[f64],
    z: &[f64],
    u: &[f64],
    dt: f64,
    cfg: &RegressionConfig,
) -> Result<Implicit> {
    let d = target.len();
    let mut y = target.to_vec();
    let mut f = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut prev_f: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut lipschitz = 0.0f64;
    let theta = cfg.damping;
    for _ in 0..cfg.implicit_max_iter {
        (problem.generator)(site, &y, z, u, &mut f);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::GeneratorEvaluation {
                t: site.t,
                y: y.clone(),
                z: z.to_vec(),
                u: u.to_vec(),
            });
        }
        if let Some((py, pf)) = &prev_f {
            let dy = dist(py, &y);
            if dy > 0.0 {
                lipschitz = lipschitz.max(dist(pf, &f) / dy);
            }
        }
        for c in 0..d {
            next[c] = (1.0 - theta) * y[c] + theta * (target[c] + f[c] * dt);
        }
        let step = dist(&next, &y);
        let size = next.iter().fold(0.0, |acc: f64, v| acc.hypot(*v));
        prev_f = Some((y.clone(), f.clone()));
        std::mem::swap(&mut y, &mut next);
        if step <= cfg.implicit_tol * (1.0 + size) {
            return Ok(Implicit::Converged(y));
        }
    }
    Ok(Implicit::Failed {
        iterations: cfg.implicit_max_iter,
        lipschitz,
    })
}

/// One backward pass of the implicit regression scheme
///
/// `Y_i = E_i[Y_{i+1}] + f(t_i, X_i, Y_i, z_i, u_i) dt_i` with `Y_n = xi`.
///
/// `Y_{i+1}` is fitted jointly as `a(X_i) + Z_i dW_i + sum_j U_i(e_j) dN~_i[j]`
/// with `a`, `Z_i`, `U_i` polynomials of `X_i`. Since the increments are
/// conditionally centred, `a` estimates `E_i[Y_{i+1}]` and the normal equations
/// give `E_i[(Y_{i+1} - fit) psi dW] = 0`, `E_i[(Y_{i+1} - fit) psi dN~] = 0`
/// for every basis function `psi`. Targets that are affine in the increments
/// with coefficients in the basis span are reproduced exactly.
pub fn solve_backward(
    problem: &ProblemSpec,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
    cfg: &RegressionConfig,
    coupling: Coupling,
) -> Result<DiscreteSolution> {
    problem.validate()?;
    problem.check_ensemble(ensemble)?;
    cfg.validate()?;
    let np = ensemble.n_paths();
    let n = ensemble.n_steps();
    if weights.n_paths() != np || weights.n_steps() != n {
        return Err(Error::InvalidArgument(format!(
            "weights ({} paths, {} steps) do not match the ensemble ({np} paths, {n} steps)",
            weights.n_paths(),
            weights.n_steps()
        )));
    }
    let (d, k, m) = (problem.dim_d, problem.dim_k, problem.n_marks());
    if let Coupling::Frozen(input) = coupling {
        if input.n_paths() != np
            || input.n_steps() != n
            || input.dim_d() != d
            || input.dim_k() != k
            || input.n_marks() != m
        {
            return Err(Error::InvalidArgument(
                "frozen (z, u) input is not aligned with the problem and ensemble".into(),
            ));
        }
    }
    let grid = ensemble.grid();
    let dx = ensemble.dim_x();
    let mut sol = DiscreteSolution::zeros(grid, np, d, k, m);
    let xi = problem.terminal_values(ensemble)?;
    for p in 0..np {
        sol.y_mut(p, n).copy_from_slice(&xi[p * d..(p + 1) * d]);
    }
    let mut states = vec![0.0; np * dx];
    for i in (0..n).rev() {
        let dt = grid.dt(i);
        for p in 0..np {
            states[p * dx..(p + 1) * dx].copy_from_slice(ensemble.x(p, i));
        }
        let next: Vec<f64> = sol.y_block().as_slice()[..]
            .chunks((n + 1) * d)
            .flat_map(|path| path[(i + 1) * d..(i + 2) * d].iter().copied())
            .collect();
        // increments whose compensator vanishes on every path carry no signal
        let live: Vec<usize> = (0..m)
            .filter(|&j| (0..np).any(|p| ensemble.compensated(p, i, j) != 0.0))
            .collect();
        let r = k + live.len();
        let mut incs = vec![0.0; np * r];
        for p in 0..np {
            let row = &mut incs[p * r..(p + 1) * r];
            row[..k].copy_from_slice(ensemble.dw(p, i));
            for (slot, &j) in live.iter().enumerate() {
                row[k + slot] = ensemble.compensated(p, i, j);
            }
        }
        let proj = Projector::fit_with_increments(&states, if cfg.degree == 0 { 0 } else { dx }, &incs, r, cfg)?;
        let blocks = proj.project_blocks(&next, d)?;
        let cond = &blocks[0];
        let zu: Vec<(Vec<f64>, Vec<f64>)> = (0..np)
            .map(|p| {
                let mut z = vec![0.0; d * k];
                let mut u = vec![0.0; d * m];
                for a in 0..d {
                    for c in 0..k {
                        z[a * k + c] = blocks[1 + c][p * d + a];
                    }
                    for (slot, &j) in live.iter().enumerate() {
                        u[a * m + j] = blocks[1 + k + slot][p * d + a];
                    }
                }
                (z, u)
            })
            .collect();
        let ys: Vec<Result<Implicit>> = (0..np)
            .into_par_iter()
            .map(|p| {
                let site = problem.site(ensemble, p, i);
                let (z, u) = match coupling {
                    Coupling::Explicit => (zu[p].0.as_slice(), zu[p].1.as_slice()),
                    Coupling::Frozen(input) => (input.z(p, i), input.u(p, i)),
                };
                implicit_y(problem, &site, &cond[p * d..(p + 1) * d], z, u, dt, cfg)
            })
            .collect();
        for (p, (res, (z, u))) in ys.into_iter().zip(zu).enumerate() {
            match res? {
                Implicit::Converged(y) => sol.y_mut(p, i).copy_from_slice(&y),
                Implicit::Failed {
                    iterations,
                    lipschitz,
                } => {
                    return Err(Error::ImplicitStep {
                        step: i,
                        path: p,
                        iterations,
                        lipschitz,
                    })
                }
            }
            sol.z_mut(p, i).copy_from_slice(&z);
            sol.u_mut(p, i).copy_from_slice(&u);
        }
    }
    sol.check_finite()?;
    sol.provenance = Provenance {
        problem: problem.name.clone(),
        scheme: format!(
            "implicit-regression degree={} ridge={} coupling={}",
            cfg.degree,
            cfg.ridge,
            match coupling {
                Coupling::Explicit => "explicit",
                Coupling::Frozen(_) => "frozen",
            }
        ),
        picard_iterations: 0,
        seed: ensemble.seed(),
    };
    Ok(sol)
}
