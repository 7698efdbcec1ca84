//! Named test problems. Defaults: `p = 2`, `beta = 1`, `epsilon = 0.1`,
//! `T` is taken from the grid.

use std::sync::Arc;

use super::{Coefficients, ProblemSpec, Site};
use crate::driver::{FactorSde, JumpMeasureSpec, PathEnsemble};
use crate::error::{Error, Result};
use crate::solution::{DiscreteSolution, Provenance};

pub const BUILTIN_NAMES: &[&str] = &[
    "zero",
    "linear_y",
    "brownian_terminal",
    "jump_terminal",
    "brownian_square",
    "monotone_cubic",
    "lipschitz_z",
    "state_localization",
    "linear_pair_a",
    "linear_pair_b",
];

/// Builtins with a closed-form solution, see [`oracle_solution`].
pub const ORACLE_NAMES: &[&str] = &[
    "zero",
    "linear_y",
    "brownian_terminal",
    "jump_terminal",
    "brownian_square",
];

pub const LINEAR_Y_RATE: f64 = 0.5;
pub const LINEAR_Y_TERMINAL: f64 = 1.0;
pub const JUMP_TERMINAL_INTENSITY: f64 = 16.0;

fn base(name: &str, dim_k: usize, factor: FactorSde, jumps: JumpMeasureSpec) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        p: 2.0,
        beta: 1.0,
        epsilon: 0.1,
        dim_d: 1,
        dim_k,
        factor,
        jumps,
        generator: Arc::new(|_, _, _, _, out| out.fill(0.0)),
        terminal: Arc::new(|_, out| out.fill(0.0)),
        coefficients: Coefficients::constant(0.0, 0.0, 0.0, 1.0, 1.0),
        depends_on_z: false,
        depends_on_u: false,
    }
}

fn single_mark(intensity: f64) -> JumpMeasureSpec {
    JumpMeasureSpec::constant(vec![vec![1.0]], &[1.0], intensity)
        .expect("constant single-mark measure")
}

/// Factor `(W, N~)` with one unit mark of intensity `lambda`.
fn brownian_and_counter(lambda: f64) -> (FactorSde, JumpMeasureSpec) {
    (
        FactorSde::brownian_and_compensated_counts(1, vec![lambda]),
        single_mark(lambda),
    )
}

pub fn builtin(name: &str) -> Result<ProblemSpec> {
    let prob = match name {
        "zero" => base(name, 1, FactorSde::none(1), JumpMeasureSpec::none()),
        "linear_y" => {
            let mut p = base(name, 1, FactorSde::none(1), JumpMeasureSpec::none());
            p.generator = Arc::new(|_, y, _, _, out| out[0] = LINEAR_Y_RATE * y[0]);
            p.terminal = Arc::new(|_, out| out[0] = LINEAR_Y_TERMINAL);
            p.coefficients =
                Coefficients::constant(LINEAR_Y_RATE, 0.0, 0.0, 1.0, LINEAR_Y_RATE);
            p
        }
        "brownian_terminal" => {
            let mut p = base(name, 2, FactorSde::brownian(2), JumpMeasureSpec::none());
            p.terminal = Arc::new(|s, out| out[0] = s.x[0]);
            p
        }
        "jump_terminal" => {
            let (f, j) = brownian_and_counter(JUMP_TERMINAL_INTENSITY);
            let mut p = base(name, 1, f, j);
            p.terminal = Arc::new(|s, out| out[0] = s.x[1]);
            p
        }
        "brownian_square" => {
            let mut p = base(name, 1, FactorSde::brownian(1), JumpMeasureSpec::none());
            p.terminal = Arc::new(|s, out| out[0] = s.x[0] * s.x[0]);
            p
        }
        "monotone_cubic" => {
            let (f, j) = brownian_and_counter(1.0);
            let mut p = base(name, 1, f, j);
            p.generator = Arc::new(|_, y, _, _, out| {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -v * v * v;
                }
            });
            p.terminal = Arc::new(|s, out| out[0] = s.x[0].sin() + 0.5 * s.x[1].sin());
            // |y|^3 <= 1 + 4 |y| holds for |y| <= 2 only.
            p.coefficients = Coefficients::constant(0.0, 0.0, 0.0, 1.0, 4.0);
            p
        }
        "lipschitz_z" => {
            let lambda = 2.0;
            let (f, j) = brownian_and_counter(lambda);
            let mut p = base(name, 1, f, j);
            p.generator = Arc::new(|s, y, z, u, out| {
                let jump: f64 = u.iter().zip(s.nu).map(|(a, b)| a * b).sum();
                out[0] = -0.5 * y[0] + 0.5 * z[0] + 0.5 * jump;
            });
            p.terminal = Arc::new(|s, out| out[0] = s.x[0].sin() + 0.2 * s.x[1]);
            // |sum_j v_j nu_j| <= sqrt(lambda) ||v||_Q
            p.coefficients =
                Coefficients::constant(-0.5, 0.5, 0.5 * lambda.sqrt(), 1.0, 0.5);
            p.depends_on_z = true;
            p.depends_on_u = true;
            p
        }
        "state_localization" => {
            let mut p = base(name, 1, FactorSde::brownian(1), JumpMeasureSpec::none());
            p.generator = Arc::new(|s, y, z, _, out| {
                out[0] = -0.25 * y[0] + (0.5 + s.x[0].abs()) * z[0] + 1.0;
            });
            p.terminal = Arc::new(|s, out| out[0] = s.x[0].sin());
            let c = Coefficients::constant(-0.25, 0.0, 0.0, 1.0, 0.25);
            p.coefficients = Coefficients {
                lipschitz_z: Arc::new(|s: &Site| 0.5 + s.x[0].abs()),
                ..c
            };
            p.depends_on_z = true;
            p
        }
        "linear_pair_a" => {
            let (f, j) = brownian_and_counter(2.0);
            let mut p = base(name, 1, f, j);
            p.generator = Arc::new(|s, y, z, _, out| {
                out[0] = -0.5 * y[0] + 0.5 * z[0] + 0.5 * s.x[0].sin();
            });
            p.terminal = Arc::new(|s, out| out[0] = s.x[0].sin() + 0.3 * s.x[1]);
            p.coefficients = Coefficients::constant(-0.5, 0.5, 0.0, 1.0, 0.5);
            p.depends_on_z = true;
            p
        }
        "linear_pair_b" => {
            let (f, j) = brownian_and_counter(2.0);
            let mut p = base(name, 1, f, j);
            p.generator = Arc::new(|_, y, z, _, out| out[0] = -0.5 * y[0] + 0.5 * z[0]);
            p.terminal = Arc::new(|s, out| out[0] = 0.5 * s.x[0].sin());
            p.coefficients = Coefficients::constant(-0.5, 0.5, 0.0, 1.0, 0.5);
            p.depends_on_z = true;
            p
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown builtin problem `{other}`; known: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(prob)
}

/// Closed-form `(Y, Z, U)` sampled on the ensemble nodes. `Z` and `U` on a
/// step are the continuous-time values at its left node.
pub fn oracle_solution(name: &str, ensemble: &PathEnsemble) -> Result<DiscreteSolution> {
    let problem = builtin(name)?;
    problem.check_ensemble(ensemble)?;
    let grid = ensemble.grid();
    let n = grid.n_steps();
    let horizon = grid.horizon();
    let mut sol = DiscreteSolution::zeros(
        grid,
        ensemble.n_paths(),
        problem.dim_d,
        problem.dim_k,
        problem.n_marks(),
    );
    for path in 0..ensemble.n_paths() {
        for node in 0..=n {
            let t = grid.time(node);
            let x = ensemble.x(path, node).to_vec();
            let (y, z, u): (f64, Vec<f64>, Vec<f64>) = match name {
                "zero" => (0.0, vec![0.0], vec![]),
                "linear_y" => (
                    LINEAR_Y_TERMINAL * (LINEAR_Y_RATE * (horizon - t)).exp(),
                    vec![0.0],
                    vec![],
                ),
                "brownian_terminal" => (x[0], vec![1.0, 0.0], vec![]),
                "jump_terminal" => (x[1], vec![0.0], vec![1.0]),
                "brownian_square" => (x[0] * x[0] + horizon - t, vec![2.0 * x[0]], vec![]),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "builtin `{other}` has no closed-form solution; oracles exist for {}",
                        ORACLE_NAMES.join(", ")
                    )))
                }
            };
            sol.y_mut(path, node)[0] = y;
            if node < n {
                sol.z_mut(path, node).copy_from_slice(&z);
                sol.u_mut(path, node).copy_from_slice(&u);
            }
        }
    }
    sol.provenance = Provenance {
        problem: name.to_string(),
        scheme: "oracle".into(),
        picard_iterations: 0,
        seed: ensemble.seed(),
    };
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::TimeGrid;

    #[test]
    fn every_builtin_validates() {
        for name in BUILTIN_NAMES {
            let p = builtin(name).unwrap();
            p.validate().unwrap();
            assert_eq!(p.name, *name);
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn oracle_terminal_matches_xi() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        for name in ORACLE_NAMES {
            let p = builtin(name).unwrap();
            let ens = p.simulate(&grid, 20, 3).unwrap();
            let sol = oracle_solution(name, &ens).unwrap();
            let xi = p.terminal_values(&ens).unwrap();
            for path in 0..20 {
                assert!((sol.y(path, 8)[0] - xi[path]).abs() < 1e-12, "{name}");
            }
        }
        let p = builtin("lipschitz_z").unwrap();
        let ens = p.simulate(&grid, 2, 0).unwrap();
        assert!(oracle_solution("lipschitz_z", &ens).is_err());
    }

    #[test]
    fn lipschitz_u_bound_is_cauchy_schwarz() {
        let p = builtin("lipschitz_z").unwrap();
        let nu = [2.0];
        let site = Site::free(0.0, &[0.0, 0.0], &nu);
        let mut a = [0.0];
        let mut b = [0.0];
        (p.generator)(&site, &[0.0], &[0.0], &[1.0], &mut a);
        (p.generator)(&site, &[0.0], &[0.0], &[0.0], &mut b);
        let lu = (p.coefficients.lipschitz_u)(&site);
        assert!((a[0] - b[0]).abs() <= lu * super::super::q_norm(&[1.0], &nu) + 1e-15);
    }
}
