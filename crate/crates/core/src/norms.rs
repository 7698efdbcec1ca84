//! Monte Carlo estimates of the weighted solution-space norms.
//!
//! Every norm is `(E[F])^{1/p}` for a pathwise functional `F`; composites add
//! the functionals of their parts, so `B^p = S^p + S_A^p`,
//! `L^p = L_Q^p + L_N^p` and `E^p = B^p + H^p + L^p` hold exactly on a fixed
//! ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::problem::{q_norm_sq, WeightPaths};
use crate::solution::DiscreteSolution;
use crate::stats::{mean_se, root_se};
use crate::verify::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "S_p")]
    Sp,
    #[serde(rename = "S_pA")]
    SpA,
    #[serde(rename = "H_p")]
    Hp,
    #[serde(rename = "L_pQ")]
    LpQ,
    #[serde(rename = "L_pN")]
    LpN,
    #[serde(rename = "B_p")]
    Bp,
    #[serde(rename = "frakL_p")]
    FrakLp,
    #[serde(rename = "E_p")]
    Ep,
}

impl NormKind {
    pub const ALL: [NormKind; 8] = [
        NormKind::Sp,
        NormKind::SpA,
        NormKind::Hp,
        NormKind::LpQ,
        NormKind::LpN,
        NormKind::Bp,
        NormKind::FrakLp,
        NormKind::Ep,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NormKind::Sp => "S_p",
            NormKind::SpA => "S_pA",
            NormKind::Hp => "H_p",
            NormKind::LpQ => "L_pQ",
            NormKind::LpN => "L_pN",
            NormKind::Bp => "B_p",
            NormKind::FrakLp => "frakL_p",
            NormKind::Ep => "E_p",
        }
    }

    /// Elementary kinds whose functionals add up to this one.
    pub fn parts(self) -> &'static [NormKind] {
        match self {
            NormKind::Bp => &[NormKind::Sp, NormKind::SpA],
            NormKind::FrakLp => &[NormKind::LpQ, NormKind::LpN],
            NormKind::Ep => &[
                NormKind::Sp,
                NormKind::SpA,
                NormKind::Hp,
                NormKind::LpQ,
                NormKind::LpN,
            ],
            NormKind::Sp => &[NormKind::Sp],
            NormKind::SpA => &[NormKind::SpA],
            NormKind::Hp => &[NormKind::Hp],
            NormKind::LpQ => &[NormKind::LpQ],
            NormKind::LpN => &[NormKind::LpN],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub kind: NormKind,
    pub p: f64,
    pub beta: f64,
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// `E[F]`, the p-th power of `value`.
    #[serde(skip)]
    pub mean: f64,
    #[serde(skip)]
    pub mean_se: f64,
}

/// Pathwise building blocks shared by the norms and the a priori displays.
/// `c` scales the exponent: the weight is `exp(c * beta * A)`.
pub(crate) struct Functionals<'a> {
    pub sol: &'a DiscreteSolution,
    pub w: &'a WeightPaths,
    pub ens: &'a PathEnsemble,
    pub beta: f64,
}

fn abs_p(v: &[f64], p: f64) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt().powf(p)
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl<'a> Functionals<'a> {
    pub fn new(
        sol: &'a DiscreteSolution,
        w: &'a WeightPaths,
        ens: &'a PathEnsemble,
        beta: f64,
    ) -> Result<Self> {
        check_aligned(sol, w, ens)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self { sol, w, ens, beta })
    }

    #[inline]
    pub fn weight(&self, c: f64, path: usize, node: usize) -> f64 {
        (c * self.beta * self.w.big_a(path, node)).exp()
    }

    /// `max_i e^{c beta A_i} |Y_i|^p` over all nodes.
    pub fn sup_y(&self, path: usize, p: f64, c: f64) -> f64 {
        (0..=self.sol.n_steps())
            .map(|i| self.weight(c, path, i) * abs_p(self.sol.y(path, i), p))
            .fold(0.0, f64::max)
    }

    /// `sum_i e^{c beta A_i} |Y_i|^p zeta_i^2 dt_i`.
    pub fn sum_y_da(&self, path: usize, p: f64, c: f64) -> f64 {
        let g = self.sol.grid();
        (0..self.sol.n_steps())
            .map(|i| {
                self.weight(c, path, i) * abs_p(self.sol.y(path, i), p) * self.w.zeta2(path, i) * g.dt(i)
            })
            .sum()
    }

    /// `sum_i e^{c beta A_i} ||Z_i||^2 dt_i`.
    pub fn z_quad(&self, path: usize, c: f64) -> f64 {
        let g = self.sol.grid();
        (0..self.sol.n_steps())
            .map(|i| self.weight(c, path, i) * sq(self.sol.z(path, i)) * g.dt(i))
            .sum()
    }

    /// `sum_i e^{c beta A_i} ||U_i||_Q^2 dt_i`.
    pub fn u_compensator(&self, path: usize, c: f64) -> f64 {
        let g = self.sol.grid();
        (0..self.sol.n_steps())
            .map(|i| {
                self.weight(c, path, i) * q_norm_sq(self.sol.u(path, i), self.ens.nu(path, i)) * g.dt(i)
            })
            .sum()
    }

    /// `sum_i e^{c beta A_i} sum_j |U_i(e_j)|^2 dN_i[j]`.
    pub fn u_jumps(&self, path: usize, c: f64) -> f64 {
        let m = self.sol.n_marks();
        if m == 0 {
            return 0.0;
        }
        (0..self.sol.n_steps())
            .map(|i| {
                let u = self.sol.u(path, i);
                let dn = self.ens.dn(path, i);
                let s: f64 = u
                    .chunks(m)
                    .map(|row| row.iter().zip(dn).map(|(v, k)| v * v * f64::from(*k)).sum::<f64>())
                    .sum();
                self.weight(c, path, i) * s
            })
            .sum()
    }

    /// Pathwise functional `F` of an elementary or composite kind.
    pub fn path_value(&self, kind: NormKind, path: usize, p: f64) -> f64 {
        let c_y = (p / 2.0).min(1.0);
        kind.parts()
            .iter()
            .map(|k| match k {
                NormKind::Sp => self.sup_y(path, p, c_y),
                NormKind::SpA => self.sum_y_da(path, p, c_y),
                NormKind::Hp => self.z_quad(path, 1.0).powf(p / 2.0),
                NormKind::LpQ => self.u_compensator(path, 1.0).powf(p / 2.0),
                NormKind::LpN => self.u_jumps(path, 1.0).powf(p / 2.0),
                _ => unreachable!("composite parts are elementary"),
            })
            .sum()
    }

    /// `(F(path))_path` in path order.
    pub fn collect(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
        (0..self.sol.n_paths()).into_par_iter().map(f).collect()
    }
}

fn check_aligned(sol: &DiscreteSolution, w: &WeightPaths, ens: &PathEnsemble) -> Result<()> {
    if sol.n_paths() != ens.n_paths()
        || w.n_paths() != ens.n_paths()
        || sol.n_steps() != ens.n_steps()
        || w.n_steps() != ens.n_steps()
        || sol.dim_k() != ens.dim_k()
        || sol.n_marks() != ens.n_marks()
    {
        return Err(Error::InvalidArgument(format!(
            "solution ({} paths, {} steps, k={}, m={}), weights ({} paths, {} steps) and ensemble ({} paths, {} steps, k={}, m={}) are not aligned",
            sol.n_paths(),
            sol.n_steps(),
            sol.dim_k(),
            sol.n_marks(),
            w.n_paths(),
            w.n_steps(),
            ens.n_paths(),
            ens.n_steps(),
            ens.dim_k(),
            ens.n_marks()
        )));
    }
    Ok(())
}

fn check_components(sol: &DiscreteSolution, kind: NormKind) -> Result<()> {
    for k in kind.parts() {
        let (name, block) = match k {
            NormKind::Sp | NormKind::SpA => ("Y", sol.y_block()),
            NormKind::Hp => ("Z", sol.z_block()),
            _ => ("U", sol.u_block()),
        };
        if block.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { component: name });
        }
    }
    Ok(())
}

/// Pathwise functionals `F` of `kind`, one per path.
pub fn pathwise(
    kind: NormKind,
    sol: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must exceed 1, got {p}")));
    }
    check_components(sol, kind)?;
    let f = Functionals::new(sol, w, ens, beta)?;
    Ok(f.collect(|path| f.path_value(kind, path, p)))
}

pub fn weighted_norm(
    kind: NormKind,
    sol: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<NormEstimate> {
    let values = pathwise(kind, sol, w, ens, p, beta)?;
    Ok(estimate_from(kind, &values, p, beta))
}

pub fn estimate_from(kind: NormKind, values: &[f64], p: f64, beta: f64) -> NormEstimate {
    let (mean, se) = mean_se(values);
    NormEstimate {
        kind,
        p,
        beta,
        value: mean.max(0.0).powf(1.0 / p),
        std_error: root_se(mean, se, p),
        n_paths: values.len(),
        mean,
        mean_se: se,
    }
}

/// All eight norms of one solution.
pub fn norm_table(
    sol: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<Vec<NormEstimate>> {
    NormKind::ALL
        .iter()
        .map(|k| weighted_norm(*k, sol, w, ens, p, beta))
        .collect()
}

/// `B^p_beta` distance used by the Picard iteration and the contraction
/// study: `(E[S_A + H + L_N + L_Q])^{1/p}` of the difference.
pub fn picard_distance(
    a: &DiscreteSolution,
    b: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<(f64, f64)> {
    let d = a.difference(b)?;
    let mut acc: Vec<f64> = vec![0.0; d.n_paths()];
    for k in [NormKind::SpA, NormKind::Hp, NormKind::LpN, NormKind::LpQ] {
        for (a, v) in acc.iter_mut().zip(pathwise(k, &d, w, ens, p, beta)?) {
            *a += v;
        }
    }
    let (mean, se) = mean_se(&acc);
    Ok((mean.max(0.0).powf(1.0 / p), root_se(mean, se, p)))
}

/// `E^p_beta` distance `(E[F_E(a - b)])^{1/p}`.
pub fn e_distance(
    a: &DiscreteSolution,
    b: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
) -> Result<f64> {
    Ok(weighted_norm(NormKind::Ep, &a.difference(b)?, w, ens, p, beta)?.value)
}

/// Compares `E[(int e^{beta A} ||U||_Q^2 ds)^{p/2}]` with
/// `E[(int e^{beta A} int |U|^2 N(ds, de))^{p/2}]`: equality for `p = 2`,
/// the compensator side bounded by `(p/2)^{p/2}` times the jump side for
/// `p > 2`, and the jump side bounded by twice the compensator side for
/// `p < 2`. Slack is `slack_sigmas` standard errors of the paired difference.
pub fn check_remark21(
    sol: &DiscreteSolution,
    w: &WeightPaths,
    ens: &PathEnsemble,
    p: f64,
    beta: f64,
    slack_sigmas: f64,
) -> Result<EstimateReport> {
    let q = pathwise(NormKind::LpQ, sol, w, ens, p, beta)?;
    let n = pathwise(NormKind::LpN, sol, w, ens, p, beta)?;
    let (lhs, rhs, constant, name) = if (p - 2.0).abs() < 1e-12 {
        (&q, &n, 1.0, "remark21_isometry")
    } else if p > 2.0 {
        (&q, &n, (p / 2.0).powf(p / 2.0), "remark21_upper")
    } else {
        (&n, &q, 2.0, "remark21_lower")
    };
    let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(l, r)| l - constant * r).collect();
    let (dm, dse) = mean_se(&diff);
    let mut rep = EstimateReport::new(name);
    rep.set_sides(mean_se(lhs), mean_se(rhs));
    rep.constant = Some(constant);
    rep.measured_ratio = crate::verify::ratio(rep.lhs, rep.rhs);
    rep.slack_sigmas = slack_sigmas;
    rep.samples = lhs.len();
    rep.passed = if name == "remark21_isometry" {
        dm.abs() <= slack_sigmas * dse
    } else {
        dm <= slack_sigmas * dse
    };
    rep.violations = usize::from(!rep.passed);
    rep.extra.insert("paired_difference".into(), dm);
    rep.extra.insert("paired_difference_se".into(), dse);
    rep.meta.p = p;
    rep.meta.beta = beta;
    rep.meta.n_paths = sol.n_paths();
    rep.meta.n_steps = sol.n_steps();
    rep.meta.problems = vec![sol.provenance.problem.clone()];
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{builtins, compute_weight_paths};

    fn setup(name: &str, n_paths: usize, n_steps: usize) -> (DiscreteSolution, WeightPaths, PathEnsemble) {
        let prob = builtins::builtin(name).unwrap();
        let grid = TimeGrid::uniform(1.0, n_steps).unwrap();
        let ens = prob.simulate(&grid, n_paths, 5).unwrap();
        let w = compute_weight_paths(&prob, &ens).unwrap();
        let sol = DiscreteSolution::zeros(&grid, n_paths, 1, prob.dim_k, prob.n_marks());
        (sol, w, ens)
    }

    #[test]
    fn null_process_has_zero_norms() {
        let (sol, w, ens) = setup("jump_terminal", 50, 8);
        for e in norm_table(&sol, &w, &ens, 2.0, 1.0).unwrap() {
            assert_eq!(e.value, 0.0, "{:?}", e.kind);
        }
    }

    #[test]
    fn constant_y_unweighted_sup() {
        let (mut sol, w, ens) = setup("zero", 10, 4);
        sol = DiscreteSolution::zeros(sol.grid(), 10, 2, 1, 0);
        for p in 0..10 {
            for i in 0..=4 {
                sol.y_mut(p, i).copy_from_slice(&[3.0, 4.0]);
            }
        }
        // beta = 0 puts every weight at 1
        let e = weighted_norm(NormKind::Sp, &sol, &w, &ens, 3.0, 0.0).unwrap();
        assert!((e.value - 5.0).abs() < 1e-12);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn riemann_sum_of_z() {
        let (_, w, ens) = setup("brownian_terminal", 7, 16);
        let mut sol = DiscreteSolution::zeros(ens.grid(), 7, 1, 2, 0);
        for p in 0..7 {
            for i in 0..16 {
                sol.z_mut(p, i).copy_from_slice(&[1.0, 1.0]);
            }
        }
        let e = weighted_norm(NormKind::Hp, &sol, &w, &ens, 2.0, 0.0).unwrap();
        assert!((e.value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn composites_add_powers() {
        let (mut sol, w, ens) = setup("jump_terminal", 200, 16);
        for p in 0..200 {
            for i in 0..=16 {
                sol.y_mut(p, i)[0] = ((p + i) as f64).sin();
            }
            for i in 0..16 {
                sol.z_mut(p, i)[0] = ((p * i) as f64).cos();
                sol.u_mut(p, i)[0] = 0.5 * ((p + 2 * i) as f64).cos();
            }
        }
        let pp = 2.5;
        let t = norm_table(&sol, &w, &ens, pp, 1.0).unwrap();
        let m = |k: NormKind| t.iter().find(|e| e.kind == k).unwrap().mean;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(m(NormKind::Bp), m(NormKind::Sp) + m(NormKind::SpA)) < 1e-12);
        assert!(rel(m(NormKind::FrakLp), m(NormKind::LpQ) + m(NormKind::LpN)) < 1e-12);
        assert!(
            rel(m(NormKind::Ep), m(NormKind::Bp) + m(NormKind::Hp) + m(NormKind::FrakLp)) < 1e-12
        );
    }

    #[test]
    fn nan_names_component() {
        let (mut sol, w, ens) = setup("brownian_terminal", 4, 4);
        sol.z_mut(1, 1)[0] = f64::NAN;
        assert!(matches!(
            weighted_norm(NormKind::Hp, &sol, &w, &ens, 2.0, 1.0),
            Err(Error::NonFinite { component: "Z" })
        ));
        // the Y norm does not read Z
        assert!(weighted_norm(NormKind::Sp, &sol, &w, &ens, 2.0, 1.0).is_ok());
    }

    #[test]
    fn isometry_for_constant_u() {
        let (mut sol, w, ens) = setup("jump_terminal", 20_000, 8);
        for p in 0..20_000 {
            for i in 0..8 {
                sol.u_mut(p, i)[0] = 1.0;
            }
        }
        let r = check_remark21(&sol, &w, &ens, 2.0, 1.0, 3.0).unwrap();
        assert!(r.passed, "{r:?}");
        let r = check_remark21(&sol, &w, &ens, 3.0, 1.0, 3.0).unwrap();
        assert!(r.passed, "{r:?}");
        let r = check_remark21(&sol, &w, &ens, 1.5, 1.0, 3.0).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn serializes_public_fields() {
        let (sol, w, ens) = setup("zero", 3, 2);
        let e = weighted_norm(NormKind::Sp, &sol, &w, &ens, 2.0, 1.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["beta", "kind", "n_paths", "p", "std_error", "value"]);
        assert_eq!(v["kind"], "S_p");
    }
}
