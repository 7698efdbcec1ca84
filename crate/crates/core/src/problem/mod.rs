//! BSDE data `(xi, f)` with the coefficient processes of the structural
//! hypotheses, the weight processes built from them, hypothesis probes and
//! the exponential change of variables.

pub mod builtins;
mod gamma;
mod probe;
mod weights;

use std::fmt;
use std::sync::Arc;

use crate::driver::{simulate_ensemble, FactorSde, JumpMeasureSpec, PathEnsemble, TimeGrid};
use crate::error::{Error, Result};

pub use gamma::{gamma_apply, gamma_paths, gamma_transform, Direction, GammaPaths};
pub use probe::{probe_conditions, ConditionReport, HypothesisCheck, ProbePlan, Witness};
pub use weights::{compute_weight_paths, zeta_squared, WeightPaths};

/// Evaluation point handed to generator and coefficient callbacks.
///
/// `path`/`step` are set when evaluating along a simulated path and `None`
/// for free probes; path-dependent wrappers act as the identity in that case.
#[derive(Debug, Clone, Copy)]
pub struct Site<'a> {
    pub t: f64,
    /// Factor state.
    pub x: &'a [f64],
    /// Compensator rates `nu_j = q_j * lambda` at `(t, x)`.
    pub nu: &'a [f64],
    pub path: Option<usize>,
    pub step: Option<usize>,
}

impl<'a> Site<'a> {
    pub fn free(t: f64, x: &'a [f64], nu: &'a [f64]) -> Self {
        Self {
            t,
            x,
            nu,
            path: None,
            step: None,
        }
    }
}

/// Terminal data of one path.
#[derive(Debug, Clone, Copy)]
pub struct TerminalSite<'a> {
    pub path: Option<usize>,
    /// Factor state at `T`.
    pub x: &'a [f64],
    /// Jump counts per mark on `[0, T]`.
    pub counts: &'a [u64],
    /// Compensated counts per mark on `[0, T]`.
    pub compensated: &'a [f64],
}

/// `f(site, y, z, u, out)`: `y` has length `d`, `z` is `d x k` row-major,
/// `u` is `d x m` row-major (`u[i * m + j]` is component `i` on mark `j`).
pub type GeneratorFn = Arc<dyn Fn(&Site, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type CoefficientFn = Arc<dyn Fn(&Site) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&TerminalSite, &mut [f64]) + Send + Sync>;

/// Monotonicity, Lipschitz and growth coefficient processes.
#[derive(Clone)]
pub struct Coefficients {
    pub alpha: CoefficientFn,
    pub lipschitz_z: CoefficientFn,
    pub lipschitz_u: CoefficientFn,
    /// Additive growth bound at `(z, u) = 0`, at least 1.
    pub phi_growth: CoefficientFn,
    /// Linear growth bound in `y`.
    pub g_growth: CoefficientFn,
}

impl Coefficients {
    pub fn constant(alpha: f64, lipschitz_z: f64, lipschitz_u: f64, phi: f64, g: f64) -> Self {
        let c = |v: f64| Arc::new(move |_: &Site| v) as CoefficientFn;
        Self {
            alpha: c(alpha),
            lipschitz_z: c(lipschitz_z),
            lipschitz_u: c(lipschitz_u),
            phi_growth: c(phi),
            g_growth: c(g),
        }
    }
}

/// Full BSDE datum.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub p: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub dim_d: usize,
    pub dim_k: usize,
    pub factor: FactorSde,
    pub jumps: JumpMeasureSpec,
    pub generator: GeneratorFn,
    pub terminal: TerminalFn,
    pub coefficients: Coefficients,
    /// Declared dependence of the generator on `z` and `u`.
    pub depends_on_z: bool,
    pub depends_on_u: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("p", &self.p)
            .field("beta", &self.beta)
            .field("epsilon", &self.epsilon)
            .field("dim_d", &self.dim_d)
            .field("dim_k", &self.dim_k)
            .field("factor", &self.factor)
            .field("jumps", &self.jumps)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "p must exceed 1, got {}",
                self.p
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.dim_d == 0 {
            return Err(Error::InvalidArgument("dim_d must be at least 1".into()));
        }
        if self.dim_k == 0 || self.dim_k != self.factor.dim_k() {
            return Err(Error::InvalidArgument(format!(
                "dim_k {} does not match the factor noise dimension {}",
                self.dim_k,
                self.factor.dim_k()
            )));
        }
        Ok(())
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_marks(&self) -> usize {
        self.jumps.n_marks()
    }

    /// Simulates an ensemble driven by this problem's factor and jump measure.
    pub fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
        simulate_ensemble(grid, &self.factor, &self.jumps, n_paths, seed)
    }

    pub fn check_ensemble(&self, ensemble: &PathEnsemble) -> Result<()> {
        if ensemble.dim_k() != self.dim_k
            || ensemble.n_marks() != self.n_marks()
            || ensemble.dim_x() != self.factor.dim()
        {
            return Err(Error::InvalidArgument(format!(
                "ensemble dimensions (k={}, marks={}, d_X={}) do not match problem `{}` (k={}, marks={}, d_X={})",
                ensemble.dim_k(),
                ensemble.n_marks(),
                ensemble.dim_x(),
                self.name,
                self.dim_k,
                self.n_marks(),
                self.factor.dim()
            )));
        }
        Ok(())
    }

    /// Evaluation site on `(path, step)` of an ensemble.
    pub fn site<'a>(&self, ensemble: &'a PathEnsemble, path: usize, step: usize) -> Site<'a> {
        Site {
            t: ensemble.grid().time(step),
            x: ensemble.x(path, step),
            nu: ensemble.nu(path, step),
            path: Some(path),
            step: Some(step),
        }
    }

    /// `xi` on one path.
    pub fn terminal_value(&self, ensemble: &PathEnsemble, path: usize, out: &mut [f64]) {
        let counts = ensemble.total_counts(path);
        let compensated = ensemble.total_compensated(path);
        let site = TerminalSite {
            path: Some(path),
            x: ensemble.x(path, ensemble.n_steps()),
            counts: &counts,
            compensated: &compensated,
        };
        (self.terminal)(&site, out);
    }

    /// `xi` on every path, `(n_paths, d)` row-major.
    pub fn terminal_values(&self, ensemble: &PathEnsemble) -> Result<Vec<f64>> {
        let d = self.dim_d;
        let mut out = vec![0.0; ensemble.n_paths() * d];
        for (p, chunk) in out.chunks_mut(d).enumerate() {
            self.terminal_value(ensemble, p, chunk);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                component: "terminal",
            });
        }
        Ok(out)
    }
}

/// `f(t, x, y, z, u)` with shape checks and a finiteness guard.
pub fn evaluate_generator(
    problem: &ProblemSpec,
    site: &Site,
    y: &[f64],
    z: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let (d, k, m) = (problem.dim_d, problem.dim_k, problem.n_marks());
    if y.len() != d || z.len() != d * k || u.len() != d * m {
        return Err(Error::InvalidArgument(format!(
            "generator arguments have lengths (y={}, z={}, u={}), expected ({d}, {}, {})",
            y.len(),
            z.len(),
            u.len(),
            d * k,
            d * m
        )));
    }
    let mut out = vec![0.0; d];
    (problem.generator)(site, y, z, u, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::GeneratorEvaluation {
            t: site.t,
            y: y.to_vec(),
            z: z.to_vec(),
            u: u.to_vec(),
        });
    }
    Ok(out)
}

/// `||u||_Q = sqrt(sum_i sum_j u_ij^2 nu_j)` for `u` stored `d x m`.
pub fn q_norm(u: &[f64], nu: &[f64]) -> f64 {
    q_norm_sq(u, nu).sqrt()
}

pub fn q_norm_sq(u: &[f64], nu: &[f64]) -> f64 {
    let m = nu.len();
    if m == 0 {
        return 0.0;
    }
    u.chunks(m)
        .map(|row| row.iter().zip(nu).map(|(v, n)| v * v * n).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(coef: f64) -> ProblemSpec {
        let mut p = builtins::builtin("zero").unwrap();
        p.generator = Arc::new(move |_, y, _, _, out| {
            for (o, v) in out.iter_mut().zip(y) {
                *o = coef * v;
            }
        });
        p.dim_d = 2;
        p
    }

    #[test]
    fn evaluates_minus_y() {
        let p = linear(-1.0);
        let site = Site::free(0.0, &[], &[]);
        let out = evaluate_generator(&p, &site, &[2.0, 0.0], &[0.0, 0.0], &[]).unwrap();
        assert_eq!(out, vec![-2.0, 0.0]);
    }

    #[test]
    fn zero_generator_is_zero() {
        let p = builtins::builtin("zero").unwrap();
        let site = Site::free(0.3, &[], &[]);
        let out = evaluate_generator(&p, &site, &[5.0], &[1.0], &[]).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn linear_form_in_z_gives_row_sums() {
        let mut p = builtins::builtin("zero").unwrap();
        p.dim_d = 2;
        p.dim_k = 2;
        p.factor = FactorSde::none(2);
        p.jumps = JumpMeasureSpec::constant(vec![vec![1.0]], &[1.0], 1.0).unwrap();
        p.generator = Arc::new(|site, _, z, u, out| {
            let k = 2;
            let m = site.nu.len();
            for i in 0..2 {
                let zs: f64 = z[i * k..(i + 1) * k].iter().sum();
                let us: f64 = (0..m).map(|j| u[i * m + j] * site.nu[j]).sum();
                out[i] = zs + us;
            }
        });
        let site = Site::free(0.0, &[], &[1.0]);
        let z = [1.0, 0.0, 0.0, 1.0];
        let out = evaluate_generator(&p, &site, &[0.0, 0.0], &z, &[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
        let z = [1.0, 2.0, -3.0, 0.5];
        let out = evaluate_generator(&p, &site, &[0.0, 0.0], &z, &[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![3.0, -2.5]);
    }

    #[test]
    fn non_finite_output_echoes_inputs() {
        let mut p = builtins::builtin("zero").unwrap();
        p.generator = Arc::new(|_, y, _, _, out| out[0] = 1.0 / y[0]);
        let site = Site::free(0.5, &[], &[]);
        match evaluate_generator(&p, &site, &[0.0], &[0.0], &[]) {
            Err(Error::GeneratorEvaluation { t, y, .. }) => {
                assert_eq!(t, 0.5);
                assert_eq!(y, vec![0.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = builtins::builtin("zero").unwrap();
        let site = Site::free(0.0, &[], &[]);
        assert!(evaluate_generator(&p, &site, &[0.0, 1.0], &[0.0], &[]).is_err());
    }

    #[test]
    fn validation_rejects_bad_exponent() {
        let p = builtins::builtin("zero").unwrap().with_p(1.0);
        assert!(p.validate().is_err());
        let p = builtins::builtin("zero").unwrap().with_beta(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn q_norm_weights_marks() {
        // d = 2, m = 2
        let u = [1.0, 2.0, 3.0, 4.0];
        let nu = [0.5, 0.25];
        let expected = 0.5 + 4.0 * 0.25 + 9.0 * 0.5 + 16.0 * 0.25;
        assert!((q_norm_sq(&u, &nu) - expected).abs() < 1e-15);
    }
}
