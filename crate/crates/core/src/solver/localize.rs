use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, Site, WeightPaths};

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Radial clamp `q_n(x) = x n / max(|x|, n)`. The computed norm of the
/// result never exceeds `n`: rounding overshoot is trimmed.
pub fn q_n(x: &[f64], n: f64) -> Vec<f64> {
    let norm = euclid(x);
    if norm <= n {
        return x.to_vec();
    }
    let mut s = n / norm;
    loop {
        let out: Vec<f64> = x.iter().map(|v| v * s).collect();
        if euclid(&out) <= n {
            return out;
        }
        s *= 1.0 - f64::EPSILON;
    }
}

/// First step index with `a >= level` on each path, `n_steps` if none.
pub fn stopping_indices(weights: &WeightPaths, level: f64) -> Vec<usize> {
    (0..weights.n_paths())
        .map(|p| {
            (0..weights.n_steps())
                .find(|&i| weights.a(p, i) >= level)
                .unwrap_or(weights.n_steps())
        })
        .collect()
}

fn check_level(level: f64) -> Result<()> {
    if !(level >= 1.0 && level.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "localization level must be at least 1, got {level}"
        )));
    }
    Ok(())
}

/// `f_n = 1{t < tau_n} f` with `tau_n` the first grid time where `a >= n`,
/// and the Lipschitz processes capped at `n`. Off-path evaluations (free
/// probes) see `f` unchanged. Tied to the ensemble `weights` came from.
pub fn localize_generator(problem: &ProblemSpec, weights: &WeightPaths, level: f64) -> Result<ProblemSpec> {
    check_level(level)?;
    let tau = Arc::new(stopping_indices(weights, level));
    let inner = problem.generator.clone();
    let gen_tau = tau.clone();
    let mut out = problem.clone();
    out.name = format!("{}/localized(n={level})", problem.name);
    out.generator = Arc::new(move |site: &Site, y: &[f64], z: &[f64], u: &[f64], o: &mut [f64]| {
        match (site.path, site.step) {
            (Some(p), Some(i)) if i >= gen_tau[p] => o.fill(0.0),
            _ => inner(site, y, z, u, o),
        }
    });
    let lz = problem.coefficients.lipschitz_z.clone();
    let lu = problem.coefficients.lipschitz_u.clone();
    out.coefficients.lipschitz_z = Arc::new(move |s: &Site| lz(s).min(level));
    out.coefficients.lipschitz_u = Arc::new(move |s: &Site| lu(s).min(level));
    Ok(out)
}

/// `xi^n = q_n(xi)` and `f_n(y, z, u) = f(y, z, u) - f(0, z, u) + q_n(f(0, z, u))`.
pub fn truncate_data(problem: &ProblemSpec, level: f64) -> Result<ProblemSpec> {
    check_level(level)?;
    let mut out = problem.clone();
    out.name = format!("{}/truncated(n={level})", problem.name);
    let term = problem.terminal.clone();
    out.terminal = Arc::new(move |s, o: &mut [f64]| {
        term(s, o);
        let c = q_n(o, level);
        o.copy_from_slice(&c);
    });
    let gen = problem.generator.clone();
    let d = problem.dim_d;
    out.generator = Arc::new(move |site: &Site, y: &[f64], z: &[f64], u: &[f64], o: &mut [f64]| {
        let mut at_zero = vec![0.0; d];
        gen(site, &vec![0.0; d], z, u, &mut at_zero);
        gen(site, y, z, u, o);
        let clamped = q_n(&at_zero, level);
        for c in 0..d {
            o[c] = o[c] - at_zero[c] + clamped[c];
        }
    });
    Ok(out)
}
