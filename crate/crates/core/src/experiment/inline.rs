//! Serializable scalar problems for config files.
//!
//! `f(t, x, y, z, u) = c + a y + sum_c b_c z_c + sum_j g_j nu_j u_j + sum_k m_k y^{n_k}`
//! with odd `n_k` and `m_k <= 0`, and
//! `xi = c + sum_i l_i X_i + sum_i s_i sin(X_i)` on the factor `X`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{FactorSde, JumpMeasureSpec};
use crate::error::{Error, Result};
use crate::problem::{Coefficients, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddTerm {
    pub coeff: f64,
    pub power: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlineGenerator {
    pub constant: f64,
    pub y: f64,
    /// One coefficient per Brownian coordinate.
    pub z: Vec<f64>,
    /// One coefficient per mark.
    pub u: Vec<f64>,
    pub odd: Vec<OddTerm>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlineTerminal {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Constant `(alpha, lipschitz_z, lipschitz_u, phi, g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    pub alpha: f64,
    pub lipschitz_z: f64,
    pub lipschitz_u: f64,
    pub phi: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub name: String,
    #[serde(default = "one")]
    pub dim_k: usize,
    /// Constant intensity of each unit mark.
    #[serde(default)]
    pub jump_rates: Vec<f64>,
    #[serde(default)]
    pub generator: InlineGenerator,
    #[serde(default)]
    pub terminal: InlineTerminal,
    /// Derived from the generator when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientTable>,
}

fn one() -> usize {
    1
}

impl InlineProblem {
    /// Coefficients implied by the generator: `alpha = a`, `L_z = |b|`,
    /// `L_u = sqrt(sum_j g_j^2 nu_j)`, `phi = max(1, |c|)` and
    /// `g = max(1, |a| + sum_k |m_k|)`. The odd terms obey this growth bound
    /// only on `|y| <= 1`; supply a table to state a different one.
    pub fn derived_coefficients(&self) -> CoefficientTable {
        let gen = &self.generator;
        CoefficientTable {
            alpha: gen.y,
            lipschitz_z: gen.z.iter().map(|b| b * b).sum::<f64>().sqrt(),
            lipschitz_u: gen
                .u
                .iter()
                .zip(&self.jump_rates)
                .map(|(g, nu)| g * g * nu)
                .sum::<f64>()
                .sqrt(),
            phi: gen.constant.abs().max(1.0),
            g: (gen.y.abs() + gen.odd.iter().map(|t| t.coeff.abs()).sum::<f64>()).max(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.jump_rates.len();
        let dim_x = self.dim_k + m;
        let gen = &self.generator;
        let bad = |what: &str| Err(Error::Config(format!("inline problem `{}`: {what}", self.name)));
        if self.dim_k == 0 {
            return bad("dim_k must be at least 1");
        }
        if self.jump_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("jump rates must be finite and nonnegative");
        }
        if !gen.z.is_empty() && gen.z.len() != self.dim_k {
            return bad(&format!("generator.z needs {} entries", self.dim_k));
        }
        if !gen.u.is_empty() && gen.u.len() != m {
            return bad(&format!("generator.u needs {m} entries"));
        }
        for t in &gen.odd {
            if t.power % 2 == 0 || t.coeff > 0.0 || !t.coeff.is_finite() {
                return bad("odd terms need an odd power and a nonpositive coefficient");
            }
        }
        if self.terminal.linear.len() > dim_x || self.terminal.sin.len() > dim_x {
            return bad(&format!("terminal has more coefficients than the {dim_x} factor coordinates"));
        }
        let all = [gen.constant, gen.y]
            .into_iter()
            .chain(gen.z.iter().copied())
            .chain(gen.u.iter().copied())
            .chain([self.terminal.constant])
            .chain(self.terminal.linear.iter().copied())
            .chain(self.terminal.sin.iter().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    pub fn to_problem(&self) -> Result<ProblemSpec> {
        self.validate()?;
        let (k, m) = (self.dim_k, self.jump_rates.len());
        let factor = FactorSde::brownian_and_compensated_counts(k, self.jump_rates.clone());
        let jumps = if m == 0 {
            JumpMeasureSpec::none()
        } else {
            let total: f64 = self.jump_rates.iter().sum();
            let marks: Vec<Vec<f64>> = (0..m).map(|j| vec![j as f64 + 1.0]).collect();
            let masses: Vec<f64> = if total > 0.0 {
                self.jump_rates.iter().map(|r| r / total).collect()
            } else {
                vec![1.0 / m as f64; m]
            };
            JumpMeasureSpec::constant(marks, &masses, total)?
        };
        let gen = self.generator.clone();
        let depends_on_z = gen.z.iter().any(|b| *b != 0.0);
        let depends_on_u = gen.u.iter().any(|g| *g != 0.0);
        let term = self.terminal.clone();
        let c = self.coefficients.clone().unwrap_or_else(|| self.derived_coefficients());
        Ok(ProblemSpec {
            name: self.name.clone(),
            p: 2.0,
            beta: 1.0,
            epsilon: 0.1,
            dim_d: 1,
            dim_k: k,
            factor,
            jumps,
            generator: Arc::new(move |s, y, z, u, out| {
                let mut v = gen.constant + gen.y * y[0];
                v += gen.z.iter().zip(z).map(|(b, z)| b * z).sum::<f64>();
                v += gen.u.iter().zip(u).zip(s.nu).map(|((g, u), nu)| g * u * nu).sum::<f64>();
                v += gen.odd.iter().map(|t| t.coeff * y[0].powi(t.power as i32)).sum::<f64>();
                out[0] = v;
            }),
            terminal: Arc::new(move |s, out| {
                let mut v = term.constant;
                v += term.linear.iter().zip(s.x).map(|(l, x)| l * x).sum::<f64>();
                v += term.sin.iter().zip(s.x).map(|(a, x)| a * x.sin()).sum::<f64>();
                out[0] = v;
            }),
            coefficients: Coefficients::constant(c.alpha, c.lipschitz_z, c.lipschitz_u, c.phi, c.g),
            depends_on_z,
            depends_on_u,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;
    use crate::problem::{probe_conditions, ProbePlan, Site};

    fn sample() -> InlineProblem {
        InlineProblem {
            name: "inline".into(),
            dim_k: 1,
            jump_rates: vec![2.0],
            generator: InlineGenerator {
                constant: 0.5,
                y: -0.5,
                z: vec![0.3],
                u: vec![0.25],
                odd: vec![OddTerm { coeff: -1.0, power: 3 }],
            },
            terminal: InlineTerminal {
                constant: 1.0,
                linear: vec![0.0, 0.5],
                sin: vec![1.0],
            },
            coefficients: None,
        }
    }

    #[test]
    fn evaluates_grammar() {
        let prob = sample().to_problem().unwrap();
        let s = Site::free(0.0, &[0.0, 0.0], &[2.0]);
        let mut o = [0.0];
        (prob.generator)(&s, &[2.0], &[1.0], &[4.0], &mut o);
        assert_eq!(o[0], 0.5 - 1.0 + 0.3 + 0.25 * 4.0 * 2.0 - 8.0);
        assert!(prob.depends_on_z && prob.depends_on_u);
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = prob.simulate(&grid, 3, 0).unwrap();
        let mut xi = [0.0];
        prob.terminal_value(&ens, 1, &mut xi);
        let x = ens.x(1, 2);
        assert!((xi[0] - (1.0 + 0.5 * x[1] + x[0].sin())).abs() < 1e-15);
    }

    #[test]
    fn derived_coefficients_admit_on_unit_box() {
        let prob = sample().to_problem().unwrap();
        let plan = ProbePlan {
            n_samples: 500,
            y_radius: 1.0,
            ..ProbePlan::default()
        };
        let rep = probe_conditions(&prob, &plan);
        assert!(rep.admitted(), "{rep:?}");
    }

    #[test]
    fn rejects_even_power_and_bad_lengths() {
        let mut p = sample();
        p.generator.odd[0].power = 2;
        assert!(p.validate().is_err());
        let mut p = sample();
        p.generator.u = vec![1.0, 2.0];
        assert!(p.validate().is_err());
    }
}
