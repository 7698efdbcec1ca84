use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProblemSpec;
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};

/// Coefficient processes along every path, evaluated at the left endpoint of
/// each step, and the cumulative weight `A` on every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPaths {
    n_paths: usize,
    n_steps: usize,
    p: f64,
    alpha: Vec<f64>,
    lipschitz_z: Vec<f64>,
    lipschitz_u: Vec<f64>,
    phi: Vec<f64>,
    g: Vec<f64>,
    a: Vec<f64>,
    zeta2: Vec<f64>,
    big_a: Vec<f64>,
}

/// `zeta^2 = a^2` for `p >= 2` and `|a|^q`, `q = p / (p - 1)`, for `p < 2`.
pub fn zeta_squared(a2: f64, p: f64) -> f64 {
    if p >= 2.0 {
        a2
    } else {
        let q = p / (p - 1.0);
        a2.powf(q / 2.0)
    }
}

struct PathWeights {
    alpha: Vec<f64>,
    lz: Vec<f64>,
    lu: Vec<f64>,
    phi: Vec<f64>,
    g: Vec<f64>,
    a: Vec<f64>,
    zeta2: Vec<f64>,
    big_a: Vec<f64>,
}

/// Evaluates the coefficient callbacks on the ensemble and accumulates
/// `A_{i+1} = A_i + zeta_i^2 dt_i`.
pub fn compute_weight_paths(problem: &ProblemSpec, ensemble: &PathEnsemble) -> Result<WeightPaths> {
    problem.check_ensemble(ensemble)?;
    let n = ensemble.n_steps();
    let grid = ensemble.grid();
    let c = &problem.coefficients;
    let per_path: Vec<PathWeights> = (0..ensemble.n_paths())
        .into_par_iter()
        .map(|path| {
            let mut w = PathWeights {
                alpha: Vec::with_capacity(n),
                lz: Vec::with_capacity(n),
                lu: Vec::with_capacity(n),
                phi: Vec::with_capacity(n),
                g: Vec::with_capacity(n),
                a: Vec::with_capacity(n),
                zeta2: Vec::with_capacity(n),
                big_a: Vec::with_capacity(n + 1),
            };
            w.big_a.push(0.0);
            for i in 0..n {
                let site = problem.site(ensemble, path, i);
                let alpha = (c.alpha)(&site);
                let lz = (c.lipschitz_z)(&site);
                let lu = (c.lipschitz_u)(&site);
                let phi = (c.phi_growth)(&site);
                let g = (c.g_growth)(&site);
                if [alpha, lz, lu, phi, g].iter().any(|v| !v.is_finite()) || lz < 0.0 || lu < 0.0
                {
                    return Err(Error::HypothesisViolation {
                        hypothesis: "H3",
                        detail: format!(
                            "coefficients not finite/nonnegative at path {path}, step {i}: lipschitz_z={lz}, lipschitz_u={lu}, alpha={alpha}, phi={phi}, g={g}"
                        ),
                    });
                }
                if phi < 1.0 {
                    return Err(Error::HypothesisViolation {
                        hypothesis: "H4",
                        detail: format!("phi_growth = {phi} < 1 at path {path}, step {i}"),
                    });
                }
                let a2 = g + lz * lz + lu * lu;
                if !(a2 >= problem.epsilon) {
                    return Err(Error::HypothesisViolation {
                        hypothesis: "H5",
                        detail: format!(
                            "a^2 = {a2} below epsilon = {} at path {path}, step {i}",
                            problem.epsilon
                        ),
                    });
                }
                let z2 = zeta_squared(a2, problem.p);
                let prev = w.big_a[i];
                w.big_a.push(prev + z2 * grid.dt(i));
                w.alpha.push(alpha);
                w.lz.push(lz);
                w.lu.push(lu);
                w.phi.push(phi);
                w.g.push(g);
                w.a.push(a2.sqrt());
                w.zeta2.push(z2);
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    let np = ensemble.n_paths();
    let mut out = WeightPaths {
        n_paths: np,
        n_steps: n,
        p: problem.p,
        alpha: Vec::with_capacity(np * n),
        lipschitz_z: Vec::with_capacity(np * n),
        lipschitz_u: Vec::with_capacity(np * n),
        phi: Vec::with_capacity(np * n),
        g: Vec::with_capacity(np * n),
        a: Vec::with_capacity(np * n),
        zeta2: Vec::with_capacity(np * n),
        big_a: Vec::with_capacity(np * (n + 1)),
    };
    for w in per_path {
        out.alpha.extend(w.alpha);
        out.lipschitz_z.extend(w.lz);
        out.lipschitz_u.extend(w.lu);
        out.phi.extend(w.phi);
        out.g.extend(w.g);
        out.a.extend(w.a);
        out.zeta2.extend(w.zeta2);
        out.big_a.extend(w.big_a);
    }
    Ok(out)
}

impl WeightPaths {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Exponent the weights were built for.
    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    fn ix(&self, path: usize, step: usize) -> usize {
        path * self.n_steps + step
    }

    #[inline]
    pub fn alpha(&self, path: usize, step: usize) -> f64 {
        self.alpha[self.ix(path, step)]
    }

    #[inline]
    pub fn lipschitz_z(&self, path: usize, step: usize) -> f64 {
        self.lipschitz_z[self.ix(path, step)]
    }

    #[inline]
    pub fn lipschitz_u(&self, path: usize, step: usize) -> f64 {
        self.lipschitz_u[self.ix(path, step)]
    }

    #[inline]
    pub fn phi(&self, path: usize, step: usize) -> f64 {
        self.phi[self.ix(path, step)]
    }

    #[inline]
    pub fn g(&self, path: usize, step: usize) -> f64 {
        self.g[self.ix(path, step)]
    }

    #[inline]
    pub fn a(&self, path: usize, step: usize) -> f64 {
        self.a[self.ix(path, step)]
    }

    #[inline]
    pub fn zeta2(&self, path: usize, step: usize) -> f64 {
        self.zeta2[self.ix(path, step)]
    }

    /// `A` at a node, `A_0 = 0`.
    #[inline]
    pub fn big_a(&self, path: usize, node: usize) -> f64 {
        self.big_a[path * (self.n_steps + 1) + node]
    }

    pub fn max_a(&self) -> f64 {
        self.a.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, Coefficients};

    fn with_coefficients(p: f64, alpha: f64, lz: f64, lu: f64, g: f64) -> ProblemSpec {
        let mut prob = builtins::builtin("zero").unwrap().with_p(p);
        prob.coefficients = Coefficients::constant(alpha, lz, lu, 1.0, g);
        prob
    }

    #[test]
    fn constant_unit_coefficients() {
        let prob = with_coefficients(2.0, 0.0, 0.0, 0.0, 1.0);
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let ens = prob.simulate(&grid, 3, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        for p in 0..3 {
            for i in 0..8 {
                assert_eq!(w.a(p, i), 1.0);
                assert_eq!(w.zeta2(p, i), 1.0);
            }
            assert!((w.big_a(p, 8) - 1.0).abs() < 1e-14);
            assert_eq!(w.big_a(p, 0), 0.0);
        }
    }

    #[test]
    fn a_squared_sums_components() {
        let prob = with_coefficients(2.0, 0.0, 2.0, 1.0, 3.0);
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 1, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        assert!((w.a(0, 0).powi(2) - 8.0).abs() < 1e-12);
        assert!((w.zeta2(0, 1) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_uses_conjugate_exponent_below_two() {
        // a^2 = 4, p = 1.5 => q = 3 and zeta^2 = |a|^3 = 8.
        assert!((zeta_squared(4.0, 1.5) - 8.0).abs() < 1e-12);
        assert_eq!(zeta_squared(4.0, 2.0), 4.0);
        let prob = with_coefficients(1.5, 0.0, 0.0, 0.0, 4.0);
        let grid = TimeGrid::uniform(0.5, 4).unwrap();
        let ens = prob.simulate(&grid, 1, 0).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        assert!((w.zeta2(0, 2) - 8.0).abs() < 1e-12);
        assert!((w.big_a(0, 4) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn floor_violation_names_h5() {
        let prob = with_coefficients(2.0, 0.0, 0.0, 0.0, 0.01).with_epsilon(0.5);
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 1, 0).unwrap();
        match compute_weight_paths(&prob, &ens) {
            Err(Error::HypothesisViolation { hypothesis, .. }) => assert_eq!(hypothesis, "H5"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phi_below_one_names_h4() {
        let mut prob = with_coefficients(2.0, 0.0, 0.0, 0.0, 1.0);
        prob.coefficients.phi_growth = std::sync::Arc::new(|_| 0.5);
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 1, 0).unwrap();
        match compute_weight_paths(&prob, &ens) {
            Err(Error::HypothesisViolation { hypothesis, .. }) => assert_eq!(hypothesis, "H4"),
            other => panic!("{other:?}"),
        }
    }
}
