//! Least-squares projection onto total-degree polynomials of the factor.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paths per partial sum; fixed so reductions do not depend on thread count.
const CHUNK: usize = 512;
const MIN_EIGEN_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    /// Total polynomial degree of the basis.
    pub degree: usize,
    /// Tikhonov parameter added to the normalized Gram matrix.
    pub ridge: f64,
    pub implicit_max_iter: usize,
    pub implicit_tol: f64,
    /// Relaxation of the implicit fixed point.
    pub damping: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            ridge: 0.0,
            implicit_max_iter: 100,
            implicit_tol: 1e-12,
            damping: 0.5,
        }
    }
}

impl RegressionConfig {
    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be finite and nonnegative, got {}",
                self.ridge
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.implicit_max_iter == 0 || !(self.implicit_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "implicit solver needs a positive iteration cap and tolerance".into(),
            ));
        }
        Ok(())
    }
}

/// Exponent vectors of all monomials of total degree `<= degree` in `dim`
/// variables, constant first.
fn monomials(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; dim]];
    let mut last = vec![vec![0u32; dim]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for e in &last {
            // extend only at or after the last nonzero exponent: no repeats
            let start = e.iter().rposition(|&k| k > 0).unwrap_or(0);
            for c in start..dim {
                let mut f = e.clone();
                f[c] += 1;
                next.push(f);
            }
        }
        out.extend(next.iter().cloned());
        last = next;
    }
    out
}

/// Fitted projector on one cross-section of states. Factorizes once and
/// projects any number of target columns.
#[derive(Debug, Clone)]
pub struct Projector {
    n_paths: usize,
    n_basis: usize,
    /// Columns per block; `n_basis / block` blocks.
    block: usize,
    /// Design matrix, `n_paths x n_basis` row-major.
    design: Vec<f64>,
    solver: GramSolver,
}

#[derive(Debug, Clone)]
enum GramSolver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Minimum-norm solution on a rank-deficient joint design.
    Pseudo(DMatrix<f64>),
}

impl Projector {
    /// `states` is `n_paths x dim` row-major.
    pub fn fit(states: &[f64], dim: usize, cfg: &RegressionConfig) -> Result<Self> {
        let (b, design) = polynomial_design(states, dim, cfg)?;
        Self::from_design(states.len() / dim, b, b, design, cfg.ridge, false)
    }

    /// Degree-0 projector: the sample mean.
    pub fn constant(n_paths: usize, ridge: f64) -> Result<Self> {
        Self::from_design(n_paths, 1, 1, vec![1.0; n_paths], ridge, false)
    }

    /// Joint fit on `psi(x)` and `psi(x) * inc_r` for the `n_inc` columns of
    /// `incs` (`n_paths x n_inc`), `psi` the polynomial basis of `states`
    /// (constant when `dim == 0` or the degree is 0). See [`Self::project_blocks`].
    pub fn fit_with_increments(
        states: &[f64],
        dim: usize,
        incs: &[f64],
        n_inc: usize,
        cfg: &RegressionConfig,
    ) -> Result<Self> {
        let n = if n_inc == 0 {
            incs.len()
        } else {
            incs.len() / n_inc
        };
        if n_inc > 0 && incs.len() != n * n_inc {
            return Err(Error::InvalidArgument(format!(
                "increment buffer of length {} is not a multiple of {n_inc}",
                incs.len()
            )));
        }
        if incs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                component: "increments",
            });
        }
        let (b0, base) = if dim == 0 || cfg.degree == 0 {
            let n = if dim == 0 { n } else { states.len() / dim };
            (1, vec![1.0; n])
        } else {
            polynomial_design(states, dim, cfg)?
        };
        let n = base.len() / b0;
        if n_inc > 0 && incs.len() != n * n_inc {
            return Err(Error::InvalidArgument(format!(
                "{} increment rows for {n} states",
                incs.len() / n_inc
            )));
        }
        let b = b0 * (1 + n_inc);
        let mut design = vec![0.0; n * b];
        design.par_chunks_mut(b).enumerate().for_each(|(p, row)| {
            let psi = &base[p * b0..(p + 1) * b0];
            row[..b0].copy_from_slice(psi);
            for r in 0..n_inc {
                let inc = incs[p * n_inc + r];
                for (o, v) in row[(r + 1) * b0..(r + 2) * b0].iter_mut().zip(psi) {
                    *o = v * inc;
                }
            }
        });
        Self::from_design(n, b, b0, design, cfg.ridge, true)
    }
}

/// Standardized total-degree monomials of `states`, `n_paths x b` row-major.
fn polynomial_design(
    states: &[f64],
    dim: usize,
    cfg: &RegressionConfig,
) -> Result<(usize, Vec<f64>)> {
    let n = if dim == 0 {
        return Err(Error::InvalidArgument(
            "use Projector::constant for a zero-dimensional state".into(),
        ));
    } else {
        states.len() / dim
    };
    if states.len() != n * dim {
        return Err(Error::InvalidArgument(format!(
            "state buffer of length {} is not a multiple of dim {dim}",
            states.len()
        )));
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: "states",
        });
    }
    // standardize; constant coordinates carry no information
    let mut keep = Vec::new();
    let mut mean = Vec::new();
    let mut scale = Vec::new();
    for c in 0..dim {
        let m = (0..n).map(|p| states[p * dim + c]).sum::<f64>() / n as f64;
        let v = (0..n)
            .map(|p| (states[p * dim + c] - m).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = v.sqrt();
        if sd > 1e-12 * (1.0 + m.abs()) {
            keep.push(c);
            mean.push(m);
            scale.push(sd);
        }
    }
    let exps = monomials(keep.len(), cfg.degree);
    let b = exps.len();
    let mut design = vec![0.0; n * b];
    design.par_chunks_mut(b).enumerate().for_each(|(p, row)| {
        let z: Vec<f64> = keep
            .iter()
            .enumerate()
            .map(|(a, &c)| (states[p * dim + c] - mean[a]) / scale[a])
            .collect();
        for (r, e) in row.iter_mut().zip(&exps) {
            *r = e.iter().zip(&z).map(|(&k, v)| v.powi(k as i32)).product();
        }
    });
    Ok((b, design))
}

impl Projector {
    /// `pseudo` admits a rank-deficient Gram matrix, solved in the minimum-norm
    /// sense. The fitted values are still the projection on the column span.
    fn from_design(n: usize, b: usize, block: usize, design: Vec<f64>, ridge: f64, pseudo: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "regression needs at least one path".into(),
            ));
        }
        let partial: Vec<Vec<f64>> = design
            .par_chunks(CHUNK * b)
            .map(|rows| {
                let mut g = vec![0.0; b * b];
                for row in rows.chunks(b) {
                    for r in 0..b {
                        for c in r..b {
                            g[r * b + c] += row[r] * row[c];
                        }
                    }
                }
                g
            })
            .collect();
        let mut gram = DMatrix::<f64>::zeros(b, b);
        for g in &partial {
            for r in 0..b {
                for c in r..b {
                    gram[(r, c)] += g[r * b + c];
                }
            }
        }
        for r in 0..b {
            for c in r..b {
                let v = gram[(r, c)] / n as f64;
                gram[(r, c)] = v;
                gram[(c, r)] = v;
            }
            gram[(r, r)] += ridge;
        }
        let eig = gram.clone().symmetric_eigenvalues();
        let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        let condition = if max > 0.0 { min / max } else { 0.0 };
        let singular = Error::SingularRegression {
            n_paths: n,
            basis_size: b,
            condition,
        };
        let solver = if ridge == 0.0 && (n < b || !(condition > MIN_EIGEN_RATIO)) {
            if !pseudo || !(max > 0.0) {
                return Err(singular);
            }
            GramSolver::Pseudo(gram.pseudo_inverse(MIN_EIGEN_RATIO * max).map_err(|_| singular)?)
        } else {
            GramSolver::Cholesky(gram.cholesky().ok_or(singular)?)
        };
        Ok(Self {
            n_paths: n,
            n_basis: b,
            block,
            design,
            solver,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Projects each of the `width` columns of `targets` (`n_paths x width`
    /// row-major) and returns the fitted values in the same layout.
    pub fn project(&self, targets: &[f64], width: usize) -> Result<Vec<f64>> {
        let coef = self.coefficients(targets, width)?;
        Ok(self.evaluate(&coef, 0, self.n_basis, width))
    }

    /// Like [`Self::project`] but returns each block of the fit separately:
    /// block 0 is `psi(x) . a`, block `r + 1` is `psi(x) . b_r`, the
    /// coefficient function of the `r`-th increment.
    pub fn project_blocks(&self, targets: &[f64], width: usize) -> Result<Vec<Vec<f64>>> {
        let coef = self.coefficients(targets, width)?;
        Ok((0..self.n_basis / self.block)
            .map(|s| self.evaluate(&coef, s * self.block, self.block, width))
            .collect())
    }

    /// Fitted values of coefficient rows `start..start + len` against the
    /// first `len` design columns.
    fn evaluate(&self, coef: &DMatrix<f64>, start: usize, len: usize, width: usize) -> Vec<f64> {
        let b = self.n_basis;
        let mut fitted = vec![0.0; self.n_paths * width];
        if width == 0 {
            return fitted;
        }
        fitted
            .par_chunks_mut(width)
            .zip(self.design.par_chunks(b))
            .for_each(|(out, row)| {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = (0..len).map(|r| row[r] * coef[(start + r, c)]).sum();
                }
            });
        fitted
    }

    fn coefficients(&self, targets: &[f64], width: usize) -> Result<DMatrix<f64>> {
        let (n, b) = (self.n_paths, self.n_basis);
        if targets.len() != n * width {
            return Err(Error::InvalidArgument(format!(
                "targets have length {}, expected {n} x {width}",
                targets.len()
            )));
        }
        let partial: Vec<Vec<f64>> = self
            .design
            .par_chunks(CHUNK * b)
            .zip(targets.par_chunks(CHUNK * width))
            .map(|(rows, ys)| {
                let mut acc = vec![0.0; b * width];
                for (row, y) in rows.chunks(b).zip(ys.chunks(width)) {
                    for r in 0..b {
                        for c in 0..width {
                            acc[r * width + c] += row[r] * y[c];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut rhs = DMatrix::<f64>::zeros(b, width);
        for acc in &partial {
            for r in 0..b {
                for c in 0..width {
                    rhs[(r, c)] += acc[r * width + c];
                }
            }
        }
        rhs /= n as f64;
        Ok(match &self.solver {
            GramSolver::Cholesky(c) => c.solve(&rhs),
            GramSolver::Pseudo(g) => g * rhs,
        })
    }
}

/// Fits on `states` (`n_paths x dim`) and projects `targets`
/// (`n_paths x width`) in one call.
pub fn regress_conditional_expectation(
    targets: &[f64],
    width: usize,
    states: &[f64],
    dim: usize,
    cfg: &RegressionConfig,
) -> Result<Vec<f64>> {
    let proj = if dim == 0 || cfg.degree == 0 {
        let n = if width == 0 { 0 } else { targets.len() / width };
        Projector::constant(n, cfg.ridge)?
    } else {
        Projector::fit(states, dim, cfg)?
    };
    proj.project(targets, width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(degree: usize) -> RegressionConfig {
        RegressionConfig::default().with_degree(degree)
    }

    #[test]
    fn monomial_counts_are_binomial() {
        // C(dim + degree, degree)
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!(monomials(3, 3).len(), 20);
        assert_eq!(monomials(1, 0), vec![vec![0]]);
        let m = monomials(2, 2);
        let mut uniq = m.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), m.len());
    }

    #[test]
    fn target_in_span_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let fit = regress_conditional_expectation(&y, 1, &x, 1, &cfg(1)).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn degree_zero_is_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = y.iter().sum::<f64>() / 300.0;
        let fit = regress_conditional_expectation(&y, 1, &x, 1, &cfg(0)).unwrap();
        assert!(fit.iter().all(|v| (v - mean).abs() < 1e-14));
    }

    #[test]
    fn even_target_on_symmetric_states_is_flat() {
        // states +-s: the odd regressor is orthogonal to s^2
        let s: Vec<f64> = (1..=100).map(|i| i as f64 / 50.0).collect();
        let x: Vec<f64> = s.iter().flat_map(|v| [*v, -*v]).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let fit = regress_conditional_expectation(&y, 1, &x, 1, &cfg(1)).unwrap();
        assert!(fit.iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn collinear_design_needs_ridge() {
        let x: Vec<f64> = (0..50).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let y = vec![1.0; 50];
        match regress_conditional_expectation(&y, 1, &x, 2, &cfg(1)) {
            Err(Error::SingularRegression { basis_size, .. }) => assert_eq!(basis_size, 3),
            other => panic!("{other:?}"),
        }
        let mut c = cfg(1);
        c.ridge = 1e-8;
        let fit = regress_conditional_expectation(&y, 1, &x, 2, &c).unwrap();
        assert!(fit.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn constant_coordinate_is_dropped() {
        let x: Vec<f64> = (0..40).flat_map(|i| [i as f64, 5.0]).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let fit = regress_conditional_expectation(&y, 1, &x, 2, &cfg(2)).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_targets_fit_to_exact_zero() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let fit = regress_conditional_expectation(&vec![0.0; 128], 2, &x, 1, &cfg(3)).unwrap();
        assert!(fit.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn multiple_columns_match_single_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().flat_map(|v| [v.sin(), v.exp()]).collect();
        let both = regress_conditional_expectation(&y, 2, &x, 1, &cfg(2)).unwrap();
        let first: Vec<f64> = y.iter().step_by(2).copied().collect();
        let one = regress_conditional_expectation(&first, 1, &x, 1, &cfg(2)).unwrap();
        for (p, v) in one.iter().enumerate() {
            assert!((both[2 * p] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn increment_blocks_recover_affine_coefficients() {
        // y = (1 + x) + (2 - x) dw + 0.5 dn, all in the joint span
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inc: Vec<f64> = (0..n).flat_map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.8)]).collect();
        let y: Vec<f64> = (0..n)
            .map(|p| 1.0 + x[p] + (2.0 - x[p]) * inc[2 * p] + 0.5 * inc[2 * p + 1])
            .collect();
        let proj = Projector::fit_with_increments(&x, 1, &inc, 2, &cfg(1)).unwrap();
        let blocks = proj.project_blocks(&y, 1).unwrap();
        assert_eq!(blocks.len(), 3);
        for p in 0..n {
            assert!((blocks[0][p] - (1.0 + x[p])).abs() < 1e-10);
            assert!((blocks[1][p] - (2.0 - x[p])).abs() < 1e-9);
            assert!((blocks[2][p] - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_joint_design_still_projects() {
        // x takes two values, so x^2 is collinear with 1 and x
        let n = 200;
        let x: Vec<f64> = (0..n).map(|p| (p % 2) as f64).collect();
        let inc: Vec<f64> = (0..n).map(|p| ((p * 7) % 5) as f64 - 2.0).collect();
        let y: Vec<f64> = (0..n).map(|p| x[p] + 3.0 * inc[p]).collect();
        assert!(Projector::fit(&x, 1, &cfg(2)).is_err());
        let proj = Projector::fit_with_increments(&x, 1, &inc, 1, &cfg(2)).unwrap();
        let fit = proj.project(&y, 1).unwrap();
        let blocks = proj.project_blocks(&y, 1).unwrap();
        for p in 0..n {
            assert!((fit[p] - y[p]).abs() < 1e-9);
            assert!((blocks[1][p] - 3.0).abs() < 1e-9);
        }
    }
}
