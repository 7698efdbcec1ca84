//! Discrete check of the weighted Itô formula for `|X|^p`, `p` in `(1, 2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{EstimateMeta, EstimateReport};
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::problem::{evaluate_generator, ProblemSpec, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::stats::slope;

/// Minimum empirical order in `dt` of the discrepancy on diffusion cases.
pub const ITO_MIN_ORDER: f64 = 0.4;

/// `X_{i+1} = X_i + F_i dt + Z_i dW_i + sum_j U_i(e_j) (dN_i[j] - nu_i[j] dt)`
/// on the paths of an ensemble, with the jumps of a step placed at its end.
#[derive(Debug, Clone)]
pub struct SemimartingalePath<'a> {
    ensemble: &'a PathEnsemble,
    dim: usize,
    x0: Vec<f64>,
    f: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> SemimartingalePath<'a> {
    /// Layouts: `x0[path][a]`, `f[path][step][a]`, `z[path][step][a][c]`,
    /// `u[path][step][a][j]`, all row-major.
    pub fn new(
        ensemble: &'a PathEnsemble,
        dim: usize,
        x0: Vec<f64>,
        f: Vec<f64>,
        z: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self> {
        let (np, n, k, m) = (ensemble.n_paths(), ensemble.n_steps(), ensemble.dim_k(), ensemble.n_marks());
        for (name, len, want) in [
            ("x0", x0.len(), np * dim),
            ("f", f.len(), np * n * dim),
            ("z", z.len(), np * n * dim * k),
            ("u", u.len(), np * n * dim * m),
        ] {
            if len != want {
                return Err(Error::InvalidArgument(format!("{name} has length {len}, expected {want}")));
            }
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            ensemble,
            dim,
            x0,
            f,
            z,
            u,
        })
    }

    /// Forward dynamics of a solution: `X_0 = Y_0`, `F = -f(t, X, Y, Z, U)`
    /// and the solution's `(Z, U)`.
    pub fn from_solution(problem: &ProblemSpec, solution: &DiscreteSolution, ensemble: &'a PathEnsemble) -> Result<Self> {
        problem.check_ensemble(ensemble)?;
        solution.check_finite()?;
        let (np, n, d) = (ensemble.n_paths(), ensemble.n_steps(), problem.dim_d);
        let mut x0 = Vec::with_capacity(np * d);
        let mut f = vec![0.0; np * n * d];
        for p in 0..np {
            x0.extend_from_slice(solution.y(p, 0));
            for i in 0..n {
                let site = problem.site(ensemble, p, i);
                let v = evaluate_generator(problem, &site, solution.y(p, i), solution.z(p, i), solution.u(p, i))?;
                for (o, g) in f[(p * n + i) * d..(p * n + i + 1) * d].iter_mut().zip(v) {
                    *o = -g;
                }
            }
        }
        Self::new(
            ensemble,
            d,
            x0,
            f,
            solution.z_block().as_slice().to_vec(),
            solution.u_block().as_slice().to_vec(),
        )
    }

    fn f(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * self.ensemble.n_steps() + step) * self.dim;
        &self.f[o..o + self.dim]
    }

    fn z(&self, path: usize, step: usize) -> &[f64] {
        let w = self.dim * self.ensemble.dim_k();
        let o = (path * self.ensemble.n_steps() + step) * w;
        &self.z[o..o + w]
    }

    fn u(&self, path: usize, step: usize) -> &[f64] {
        let w = self.dim * self.ensemble.n_marks();
        let o = (path * self.ensemble.n_steps() + step) * w;
        &self.u[o..o + w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoResidual {
    /// `sqrt(mean_paths |LHS_i - RHS_i|^2)` per node.
    pub per_node: Vec<f64>,
    pub max: f64,
    /// `max_i sqrt(mean_paths LHS_i^2)`.
    pub lhs_scale: f64,
    /// `max / lhs_scale`, `0` when both vanish.
    pub relative: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `int_0^dt e^{kappa s} ds`.
fn exp_integral(kappa: f64, dt: f64) -> f64 {
    if kappa == 0.0 {
        dt
    } else {
        (kappa * dt).exp_m1() / kappa
    }
}

/// Per-path `(LHS_i, RHS_i)` for all nodes.
fn sides(x: &SemimartingalePath, w: &WeightPaths, path: usize, p: f64, beta: f64, mu: f64) -> (Vec<f64>, Vec<f64>) {
    let ens = x.ensemble;
    let grid = ens.grid();
    let (n, d, k, m) = (ens.n_steps(), x.dim, ens.dim_k(), ens.n_marks());
    let weight = |i: usize| (0.5 * p * beta * w.big_a(path, i) + mu * grid.time(i)).exp();
    let mut state = x.x0[path * d..(path + 1) * d].to_vec();
    let mut lhs = Vec::with_capacity(n + 1);
    let mut rhs = Vec::with_capacity(n + 1);
    lhs.push(norm(&state).powf(p));
    rhs.push(lhs[0]);
    let mut acc = lhs[0];
    for i in 0..n {
        let dt = grid.dt(i);
        let (wi, wn) = (weight(i), weight(i + 1));
        let kappa = 0.5 * p * beta * w.zeta2(path, i) + mu;
        // int_{t_i}^{t_{i+1}} e^{(p/2) beta A_s + mu s} ds with A linear on the step
        let iw = wi * exp_integral(kappa, dt);
        let (f, z, u) = (x.f(path, i), x.z(path, i), x.u(path, i));
        let (dw, dn, nu) = (ens.dw(path, i), ens.dn(path, i), ens.nu(path, i));
        let nx = norm(&state);
        let xp = nx.powf(p);
        // dA and ds terms
        acc += kappa * xp * iw;
        if nx > 0.0 {
            let c = p * nx.powf(p - 2.0);
            let fx: f64 = (0..d).map(|a| state[a] * f[a]).sum();
            acc += c * fx * iw;
            let mut zw = 0.0;
            let mut comp = 0.0;
            for a in 0..d {
                zw += state[a] * (0..k).map(|c| z[a * k + c] * dw[c]).sum::<f64>();
                comp += state[a] * (0..m).map(|j| u[a * m + j] * nu[j]).sum::<f64>();
            }
            acc += c * wi * zw;
            acc -= c * comp * iw;
            let zz: f64 = z.iter().map(|v| v * v).sum();
            let ztx: f64 = (0..k)
                .map(|col| {
                    let s: f64 = (0..d).map(|a| z[a * k + col] * state[a]).sum::<f64>() / nx;
                    s * s
                })
                .sum();
            acc += 0.5 * p * nx.powf(p - 2.0) * ((2.0 - p) * (zz - ztx) + (p - 1.0) * zz) * iw;
        }
        // continuous part of the step
        for a in 0..d {
            let mut inc = f[a] * dt;
            for c in 0..k {
                inc += z[a * k + c] * dw[c];
            }
            for j in 0..m {
                inc -= u[a * m + j] * nu[j] * dt;
            }
            state[a] += inc;
        }
        // jumps at the end of the step; the compensated and uncompensated
        // jump integrands add up to w (|x + U|^p - |x|^p)
        for (j, &count) in dn.iter().enumerate() {
            for _ in 0..count {
                let before = norm(&state).powf(p);
                let bn = norm(&state);
                let mut lin = 0.0;
                for a in 0..d {
                    lin += state[a] * u[a * m + j];
                    state[a] += u[a * m + j];
                }
                let lin = if bn > 0.0 { p * bn.powf(p - 2.0) * lin } else { 0.0 };
                let after = norm(&state).powf(p);
                acc += wn * lin + wn * (after - before - lin);
            }
        }
        lhs.push(wn * norm(&state).powf(p));
        rhs.push(acc);
    }
    (lhs, rhs)
}

/// Evaluates both sides of the identity for `e^{(p/2) beta A_t + mu t}|X_t|^p`
/// at every node. Lebesgue integrals use left-endpoint integrands against
/// the exact integral of the weight over the step, the `dW` integral is an
/// increment sum and jump terms run over the actual jumps. With `Z = 0` and
/// `X` constant between jumps all terms are exact.
pub fn verify_ito_formula(
    p: f64,
    beta: f64,
    mu: f64,
    x: &SemimartingalePath,
    weights: &WeightPaths,
) -> Result<ItoResidual> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, 2), got {p}")));
    }
    if !(beta >= 0.0 && beta.is_finite() && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("need finite beta >= 0 and mu, got {beta}, {mu}")));
    }
    let ens = x.ensemble;
    if weights.n_paths() != ens.n_paths() || weights.n_steps() != ens.n_steps() {
        return Err(Error::InvalidArgument("weights and ensemble are not aligned".into()));
    }
    let n = ens.n_steps();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..ens.n_paths())
        .into_par_iter()
        .map(|path| sides(x, weights, path, p, beta, mu))
        .collect();
    let np = rows.len() as f64;
    let per_node: Vec<f64> = (0..=n)
        .map(|i| (rows.iter().map(|(l, r)| (l[i] - r[i]).powi(2)).sum::<f64>() / np).sqrt())
        .collect();
    let lhs_scale = (0..=n)
        .map(|i| (rows.iter().map(|(l, _)| l[i] * l[i]).sum::<f64>() / np).sqrt())
        .fold(0.0, f64::max);
    let max = per_node.iter().copied().fold(0.0, f64::max);
    if !max.is_finite() || !lhs_scale.is_finite() {
        return Err(Error::NonFinite { component: "ito" });
    }
    Ok(ItoResidual {
        relative: if max == 0.0 { 0.0 } else { max / lhs_scale },
        per_node,
        max,
        lhs_scale,
    })
}

/// Runs [`verify_ito_formula`] on each level (coarse to fine or the
/// reverse) and fits the order of the max discrepancy in `dt`. Passes when
/// the order is at least [`ITO_MIN_ORDER`].
pub fn ito_refinement(
    p: f64,
    beta: f64,
    mu: f64,
    levels: &[(SemimartingalePath, &WeightPaths)],
) -> Result<EstimateReport> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument("refinement needs at least two levels".into()));
    }
    let mut rep = EstimateReport::new("ito_refinement");
    let (mut log_dt, mut log_err) = (Vec::new(), Vec::new());
    for (x, w) in levels {
        let r = verify_ito_formula(p, beta, mu, x, w)?;
        let n = x.ensemble.n_steps();
        let dt = x.ensemble.grid().horizon() / n as f64;
        rep.extra.insert(format!("discrepancy_n{n:05}"), r.max);
        log_dt.push(dt.ln());
        log_err.push(r.max.ln());
    }
    let order = slope(&log_dt, &log_err);
    rep.extra.insert("order".into(), order);
    rep.set_sides((ITO_MIN_ORDER, 0.0), (order, 0.0));
    rep.constant = Some(1.0);
    rep.samples = levels.len();
    rep.passed = order.is_finite() && order >= ITO_MIN_ORDER;
    rep.violations = usize::from(!rep.passed);
    let finest = levels.iter().map(|(x, _)| x.ensemble).max_by_key(|e| e.n_steps()).expect("levels");
    rep.meta = EstimateMeta {
        p,
        beta,
        n_paths: finest.n_paths(),
        n_steps: finest.n_steps(),
        problems: Vec::new(),
    };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, compute_weight_paths};

    fn brownian(ens: &PathEnsemble) -> SemimartingalePath<'_> {
        let (np, n, m) = (ens.n_paths(), ens.n_steps(), ens.n_marks());
        let k = ens.dim_k();
        let mut z = vec![0.0; np * n * k];
        z.iter_mut().step_by(k).for_each(|v| *v = 1.0);
        SemimartingalePath::new(ens, 1, vec![0.0; np], vec![0.0; np * n], z, vec![0.0; np * n * m]).unwrap()
    }

    #[test]
    fn null_path_is_exact() {
        let prob = builtins::builtin("jump_terminal").unwrap();
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 20, 0).unwrap();
        let w = compute_weight_paths(&prob.clone().with_p(1.5), &ens).unwrap();
        let (np, n) = (20, 8);
        let zk = ens.dim_k();
        let x = SemimartingalePath::new(&ens, 1, vec![0.0; np], vec![0.0; np * n], vec![0.0; np * n * zk], vec![0.0; np * n]).unwrap();
        let r = verify_ito_formula(1.5, 1.0, 0.3, &x, &w).unwrap();
        assert_eq!(r.max, 0.0);
        assert_eq!(r.relative, 0.0);
    }

    #[test]
    fn counting_process_is_exact() {
        // X = 1 + N with drift nu cancelling the compensator
        let prob = builtins::builtin("jump_terminal").unwrap().with_p(1.5);
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let ens = prob.simulate(&grid, 200, 5).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let (np, n) = (200, 16);
        let f: Vec<f64> = (0..np).flat_map(|p| (0..n).map(move |i| (p, i))).map(|(p, i)| ens.nu(p, i)[0]).collect();
        let x = SemimartingalePath::new(
            &ens,
            1,
            vec![1.0; np],
            f,
            vec![0.0; np * n * ens.dim_k()],
            vec![1.0; np * n],
        )
        .unwrap();
        let r = verify_ito_formula(1.5, 0.7, 0.9, &x, &w).unwrap();
        assert!(r.relative < 1e-10, "{r:?}");
    }

    #[test]
    fn signed_jumps_through_zero_are_exact() {
        // X = 0.5 - N: crosses the origin
        let prob = builtins::builtin("jump_terminal").unwrap().with_p(1.2);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ens = prob.simulate(&grid, 100, 6).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let (np, n) = (100, 4);
        let f: Vec<f64> = (0..np).flat_map(|p| (0..n).map(move |i| (p, i))).map(|(p, i)| -ens.nu(p, i)[0]).collect();
        let x = SemimartingalePath::new(&ens, 1, vec![0.5; np], f, vec![0.0; np * n * ens.dim_k()], vec![-1.0; np * n])
            .unwrap();
        assert!(verify_ito_formula(1.2, 1.0, 0.0, &x, &w).unwrap().relative < 1e-10);
    }

    #[test]
    fn brownian_discrepancy_shrinks() {
        let prob = builtins::builtin("brownian_terminal").unwrap().with_p(1.5);
        let grid = TimeGrid::uniform(1.0, 256).unwrap();
        let fine = prob.simulate(&grid, 2000, 7).unwrap();
        let coarse: Vec<PathEnsemble> = [4, 2, 1].iter().map(|f| fine.coarsen(*f).unwrap()).collect();
        let weights: Vec<WeightPaths> = coarse.iter().map(|e| compute_weight_paths(&prob, e).unwrap()).collect();
        let levels: Vec<_> = coarse.iter().zip(&weights).map(|(e, w)| (brownian(e), w)).collect();
        let rep = ito_refinement(1.5, 0.0, 0.0, &levels).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn rejects_p_outside() {
        let prob = builtins::builtin("brownian_terminal").unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 2, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        assert!(verify_ito_formula(2.5, 0.0, 0.0, &brownian(&ens), &w).is_err());
    }
}
