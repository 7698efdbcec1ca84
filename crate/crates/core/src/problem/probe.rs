//! Randomized probes of the structural hypotheses on a bounded box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{q_norm, ProblemSpec, Site};

/// Sampling plan: `t` uniform on `[0, horizon]`, every other coordinate
/// uniform on `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbePlan {
    pub n_samples: usize,
    pub seed: u64,
    pub horizon: f64,
    pub x_radius: f64,
    pub y_radius: f64,
    pub z_radius: f64,
    pub u_radius: f64,
    /// Decreasing perturbation sizes for the continuity probe.
    pub h_ladder: Vec<f64>,
}

impl Default for ProbePlan {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: 0,
            horizon: 1.0,
            x_radius: 3.0,
            y_radius: 2.0,
            z_radius: 2.0,
            u_radius: 2.0,
            h_ladder: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
        }
    }
}

/// Probe point at which a hypothesis was worst violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub z: Vec<f64>,
    pub z_prime: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: String,
    pub probes: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` over violating probes, 0 when there are none.
    pub worst: f64,
    pub witness: Option<Witness>,
}

impl HypothesisCheck {
    fn new(hypothesis: &str) -> Self {
        Self {
            hypothesis: hypothesis.to_string(),
            probes: 0,
            violations: 0,
            worst: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, point: impl FnOnce() -> Witness) {
        self.probes += 1;
        let tol = 1e-10 * (1.0 + lhs.abs() + rhs.abs());
        if lhs <= rhs + tol {
            return;
        }
        self.violations += 1;
        let excess = if (lhs - rhs).is_nan() {
            f64::INFINITY
        } else {
            lhs - rhs
        };
        if self.witness.is_none() || excess > self.worst {
            self.worst = excess;
            let mut w = point();
            w.lhs = lhs;
            w.rhs = rhs;
            self.witness = Some(w);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub problem: String,
    pub checks: Vec<HypothesisCheck>,
}

impl ConditionReport {
    /// No violation of any probed hypothesis.
    pub fn admitted(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }

    pub fn check(&self, hypothesis: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == hypothesis)
    }
}

fn sample(rng: &mut ChaCha8Rng, len: usize, radius: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if radius > 0.0 {
                rng.random_range(-radius..=radius)
            } else {
                0.0
            }
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Checks (H2) monotonicity, (H3) Lipschitz continuity in `(z, u)` with
/// nonnegative coefficients, (H4) growth at `(z, u) = 0` with `phi >= 1`,
/// (H5) `a^2 >= epsilon` and (H6) continuity in `y` along the `h` ladder.
///
/// The first sample is the anchor `t = 0`, `x = x0`, `y = 1`, `y' = 0`,
/// `z = z' = 0`, `u = u' = 0`.
pub fn probe_conditions(problem: &ProblemSpec, plan: &ProbePlan) -> ConditionReport {
    let (d, k, m) = (problem.dim_d, problem.dim_k, problem.n_marks());
    let dx = problem.factor.dim();
    let c = &problem.coefficients;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut h2 = HypothesisCheck::new("H2");
    let mut h3 = HypothesisCheck::new("H3");
    let mut h4 = HypothesisCheck::new("H4");
    let mut h5 = HypothesisCheck::new("H5");
    let mut h6 = HypothesisCheck::new("H6");
    let mut nu = vec![0.0; m];
    let mut f_a = vec![0.0; d];
    let mut f_b = vec![0.0; d];
    let zeros_z = vec![0.0; d * k];
    let zeros_u = vec![0.0; d * m];
    for s in 0..plan.n_samples {
        let (t, x, y, yp, z, zp, u, up) = if s == 0 {
            (
                0.0,
                problem.factor.x0().to_vec(),
                vec![1.0; d],
                vec![0.0; d],
                zeros_z.clone(),
                zeros_z.clone(),
                zeros_u.clone(),
                zeros_u.clone(),
            )
        } else {
            (
                rng.random_range(0.0..=plan.horizon),
                sample(&mut rng, dx, plan.x_radius),
                sample(&mut rng, d, plan.y_radius),
                sample(&mut rng, d, plan.y_radius),
                sample(&mut rng, d * k, plan.z_radius),
                sample(&mut rng, d * k, plan.z_radius),
                sample(&mut rng, d * m, plan.u_radius),
                sample(&mut rng, d * m, plan.u_radius),
            )
        };
        problem.jumps.rates(t, &x, &mut nu);
        let site = Site::free(t, &x, &nu);
        let witness = || Witness {
            t,
            x: x.clone(),
            y: y.clone(),
            y_prime: yp.clone(),
            z: z.clone(),
            z_prime: zp.clone(),
            u: u.clone(),
            u_prime: up.clone(),
            lhs: 0.0,
            rhs: 0.0,
        };
        let alpha = (c.alpha)(&site);
        let lz = (c.lipschitz_z)(&site);
        let lu = (c.lipschitz_u)(&site);
        let phi = (c.phi_growth)(&site);
        let g = (c.g_growth)(&site);

        (problem.generator)(&site, &y, &z, &u, &mut f_a);
        (problem.generator)(&site, &yp, &z, &u, &mut f_b);
        let dy: Vec<f64> = y.iter().zip(&yp).map(|(a, b)| a - b).collect();
        let inner: f64 = dy.iter().zip(f_a.iter().zip(&f_b)).map(|(e, (a, b))| e * (a - b)).sum();
        let dy2: f64 = dy.iter().map(|v| v * v).sum();
        h2.record(inner, alpha * dy2, witness);

        (problem.generator)(&site, &y, &zp, &up, &mut f_b);
        let du: Vec<f64> = u.iter().zip(&up).map(|(a, b)| a - b).collect();
        let rhs3 = if lz >= 0.0 && lu >= 0.0 {
            lz * dist(&z, &zp) + lu * q_norm(&du, &nu)
        } else {
            f64::NEG_INFINITY
        };
        h3.record(dist(&f_a, &f_b), rhs3, witness);

        (problem.generator)(&site, &y, &zeros_z, &zeros_u, &mut f_a);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fnorm = f_a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs4 = if phi >= 1.0 { phi + g * ynorm } else { f64::NEG_INFINITY };
        h4.record(fnorm, rhs4, witness);

        let a2 = g + lz * lz + lu * lu;
        h5.record(problem.epsilon, a2, witness);

        (problem.generator)(&site, &y, &z, &u, &mut f_a);
        let base = f_a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = if s == 0 { vec![1.0; d] } else { sample(&mut rng, d, 1.0) };
        let dnorm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        if let Some(&h) = plan.h_ladder.last() {
            let yh: Vec<f64> = y.iter().zip(&dir).map(|(a, e)| a + h * e / dnorm).collect();
            (problem.generator)(&site, &yh, &z, &u, &mut f_b);
            h6.record(dist(&f_a, &f_b), 1e-6 * (1.0 + base), witness);
        }
    }
    ConditionReport {
        problem: problem.name.clone(),
        checks: vec![h2, h3, h4, h5, h6],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtins, Coefficients};
    use std::sync::Arc;

    fn plan(n: usize) -> ProbePlan {
        ProbePlan {
            n_samples: n,
            ..ProbePlan::default()
        }
    }

    #[test]
    fn cubic_is_monotone() {
        let p = builtins::builtin("monotone_cubic").unwrap();
        let r = probe_conditions(&p, &plan(10_000));
        let h2 = r.check("H2").unwrap();
        assert_eq!(h2.probes, 10_000);
        assert_eq!(h2.violations, 0);
        assert!(r.admitted(), "{r:?}");
    }

    #[test]
    fn square_breaks_monotonicity_at_anchor() {
        let mut p = builtins::builtin("zero").unwrap();
        p.generator = Arc::new(|_, y, _, _, out| out[0] = y[0] * y[0]);
        let r = probe_conditions(&p, &plan(1));
        let h2 = r.check("H2").unwrap();
        assert_eq!(h2.violations, 1);
        let w = h2.witness.as_ref().unwrap();
        assert_eq!((w.y[0], w.y_prime[0]), (1.0, 0.0));
        assert_eq!(w.lhs, 1.0);
    }

    #[test]
    fn steep_z_dependence_breaks_lipschitz() {
        let mut p = builtins::builtin("brownian_terminal").unwrap();
        // z in R^{1x2}, v = (3, 0) has |v| = 3 > lipschitz_z = 2
        p.generator = Arc::new(|_, _, z, _, out| out[0] = 3.0 * z[0]);
        p.coefficients = Coefficients::constant(0.0, 2.0, 0.0, 1.0, 1.0);
        let r = probe_conditions(&p, &plan(1000));
        let h3 = r.check("H3").unwrap();
        assert!(h3.violations >= 1);
        let w = h3.witness.as_ref().unwrap();
        let dz = ((w.z[0] - w.z_prime[0]).powi(2) + (w.z[1] - w.z_prime[1]).powi(2)).sqrt();
        assert!(w.lhs > 2.0 * dz);
        assert!(!r.admitted());
    }

    #[test]
    fn every_builtin_is_admitted_on_default_plan() {
        for name in builtins::BUILTIN_NAMES {
            let p = builtins::builtin(name).unwrap();
            let r = probe_conditions(&p, &plan(2000));
            assert!(r.admitted(), "{name}: {r:?}");
        }
    }

    #[test]
    fn discontinuity_in_y_is_witnessed() {
        let mut p = builtins::builtin("zero").unwrap();
        p.generator = Arc::new(|_, y, _, _, out| out[0] = if y[0] > 0.3 { -1.0 } else { 0.0 });
        p.coefficients = Coefficients::constant(0.0, 0.0, 0.0, 1.0, 1.0);
        let mut pl = plan(1);
        pl.h_ladder = vec![-0.8];
        // y = 1 stepped back by 0.8 crosses the jump at 0.3
        let r = probe_conditions(&p, &pl);
        assert_eq!(r.check("H6").unwrap().violations, 1);
        let r = probe_conditions(&p, &plan(1));
        assert_eq!(r.check("H6").unwrap().violations, 0);
    }

    #[test]
    fn growth_and_floor() {
        let mut p = builtins::builtin("zero").unwrap();
        p.generator = Arc::new(|_, y, _, _, out| out[0] = 5.0 + y[0]);
        p.coefficients = Coefficients::constant(1.0, 0.0, 0.0, 1.0, 0.01);
        let r = probe_conditions(&p, &plan(10));
        assert!(r.check("H4").unwrap().violations > 0);
        assert_eq!(r.check("H5").unwrap().violations, 10);
    }
}
