//! Pointwise inequalities: the `3^{1-p}` integral lower bound and the
//! `b_p` jump bound used for `p` in `(1, 2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::quadrature::integrate;
use super::report::{EstimateMeta, EstimateReport};
use crate::driver::PathEnsemble;
use crate::error::{Error, Result};
use crate::problem::WeightPaths;
use crate::solution::DiscreteSolution;

/// Relative quadrature tolerance for the integral bound.
pub const LEMMA31_QUAD_TOL: f64 = 1e-10;
/// Bound slack in units of `|x|^{p-2}`.
pub const LEMMA31_SLACK: f64 = 1e-9;
/// Round-off slack of the jump bound, relative to the magnitude of its terms.
pub const LEMMA33_REL_SLACK: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `int_0^1 (1 - r) |x + r y|^{p-2} dr`.
pub fn lemma31_integral(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    let yy = dot(y, y);
    let f = |r: f64| {
        let v: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a + r * b) * (a + r * b))
            .sum::<f64>()
            .sqrt();
        (1.0 - r) * v.powf(p - 2.0)
    };
    // |x + r y| is smallest at r* = -x.y / |y|^2; split there
    let r_star = if yy > 0.0 { -dot(x, y) / yy } else { -1.0 };
    if r_star > 0.0 && r_star < 1.0 {
        Ok(integrate(f, 0.0, r_star, LEMMA31_QUAD_TOL)? + integrate(f, r_star, 1.0, LEMMA31_QUAD_TOL)?)
    } else {
        integrate(f, 0.0, 1.0, LEMMA31_QUAD_TOL)
    }
}

/// `3^{1-p} |x|^{p-2}`.
pub fn lemma31_bound(x: &[f64], p: f64) -> f64 {
    3f64.powf(1.0 - p) * norm(x).powf(p - 2.0)
}

/// Sampling regimes, cycled by sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    YZero,
    XZero,
    /// `r_0 = 2|x| / (3|y|) < 1/2`
    Small,
    /// `1/2 <= r_0 < 1`
    Middle,
    /// `r_0 >= 1`
    Large,
}

const REGIMES: [Regime; 5] = [Regime::YZero, Regime::XZero, Regime::Small, Regime::Middle, Regime::Large];

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

fn sample_pair(rng: &mut ChaCha8Rng, dim: usize, regime: Regime) -> (Vec<f64>, Vec<f64>) {
    let ex = unit(rng, dim);
    let r_x = 10f64.powf(rng.random_range(-1.0..1.0));
    let x: Vec<f64> = ex.iter().map(|a| a * r_x).collect();
    let r0 = match regime {
        Regime::YZero => return (x, vec![0.0; dim]),
        Regime::XZero => {
            let r_y = 10f64.powf(rng.random_range(-1.0..1.0));
            return (vec![0.0; dim], unit(rng, dim).iter().map(|a| a * r_y).collect());
        }
        Regime::Small => rng.random_range(0.01..0.5),
        Regime::Middle => rng.random_range(0.5..1.0),
        Regime::Large => rng.random_range(1.0..20.0),
    };
    let r_y = 2.0 * r_x / (3.0 * r0);
    // half of the directions point back through the origin
    let ey = if rng.random_bool(0.5) {
        ex.iter().map(|a| -a).collect()
    } else {
        unit(rng, dim)
    };
    (x, ey.iter().map(|a| a * r_y).collect())
}

/// Checks `int_0^1 (1 - r)|x + r y|^{p-2} dr >= 3^{1-p}|x|^{p-2}` on
/// `n_samples` random triples with `p` uniform on `p_range` (which must lie
/// in `(2, inf)`) and `x, y` in `R^dim`. Samples cycle through `y = 0`,
/// `x = 0` and the three `r_0` regimes. The report's `lhs` and `rhs` are
/// the bound and the integral at the tightest sample.
pub fn verify_lemma31(p_range: (f64, f64), n_samples: usize, dim: usize, seed: u64) -> Result<EstimateReport> {
    let (lo, hi) = p_range;
    if !(lo > 2.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "p range must lie in (2, inf), got [{lo}, {hi}]"
        )));
    }
    if dim == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument("need dim >= 1 and n_samples >= 1".into()));
    }
    let rows: Vec<(f64, f64, f64, Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let p = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let (x, y) = sample_pair(&mut rng, dim, REGIMES[s % REGIMES.len()]);
            let integral = lemma31_integral(&x, &y, p)?;
            Ok((p, lemma31_bound(&x, p), integral, x, y))
        })
        .collect::<Result<_>>()?;
    let mut rep = EstimateReport::new("lemma31");
    let mut worst: Option<usize> = None;
    let mut worst_margin = f64::INFINITY;
    for (s, (p, bound, integral, x, _)) in rows.iter().enumerate() {
        let scale = norm(x).powf(p - 2.0);
        if integral + LEMMA31_SLACK * scale < *bound {
            rep.violations += 1;
        }
        // margin in units of |x|^{p-2}; x = 0 rows have margin = integral
        let margin = if scale > 0.0 { (integral - bound) / scale } else { *integral };
        if margin < worst_margin {
            worst_margin = margin;
            worst = Some(s);
        }
    }
    let w = worst.expect("at least one sample");
    let (p, bound, integral, x, y) = &rows[w];
    rep.set_sides((*bound, 0.0), (*integral, 0.0));
    rep.constant = Some(1.0);
    rep.samples = n_samples;
    rep.passed = rep.violations == 0;
    rep.witness = Some(format!("p={p}, x={x:?}, y={y:?}"));
    rep.extra.insert("worst_margin".into(), worst_margin);
    rep.meta = EstimateMeta {
        p: *p,
        ..EstimateMeta::default()
    };
    Ok(rep)
}

/// `b_p = p (p - 1) / 2`.
pub fn b_p(p: f64) -> f64 {
    p * (p - 1.0) / 2.0
}

/// Both sides of the jump bound at pre-jump state `x` and jump `y`:
/// `(b_p |y|^2 (|x|^2 v |x+y|^2)^{(p-2)/2}, |x+y|^p - |x|^p - p|x|^{p-2} x.y)`,
/// each `0` when `x = x + y = 0`.
pub fn lemma33_sides(x: &[f64], y: &[f64], p: f64) -> (f64, f64) {
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let (nx, nxy) = (norm(x), norm(&xy));
    if nx == 0.0 && nxy == 0.0 {
        return (0.0, 0.0);
    }
    let big = nx.max(nxy);
    let bound = b_p(p) * dot(y, y) * big.powf(p - 2.0);
    let lin = if nx > 0.0 { p * nx.powf(p - 2.0) * dot(x, y) } else { 0.0 };
    (bound, nxy.powf(p) - nx.powf(p) - lin)
}

/// Checks the jump bound along every simulated jump of `solution` with
/// `x = Y` before the jump and `y = U(e)`. Several jumps inside one step
/// are applied one after another, starting from `Y_i`. Both sides carry
/// the weight `exp((p/2) beta A_i)`. Deterministic; no Monte Carlo slack.
pub fn verify_lemma33(
    p: f64,
    beta: f64,
    solution: &DiscreteSolution,
    ensemble: &PathEnsemble,
    weights: &WeightPaths,
) -> Result<EstimateReport> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, 2), got {p}")));
    }
    if solution.n_paths() != ensemble.n_paths()
        || solution.n_steps() != ensemble.n_steps()
        || solution.n_marks() != ensemble.n_marks()
        || weights.n_paths() != ensemble.n_paths()
        || weights.n_steps() != ensemble.n_steps()
    {
        return Err(Error::InvalidArgument(
            "solution, weights and ensemble are not aligned".into(),
        ));
    }
    let (d, m, n) = (solution.dim_d(), solution.n_marks(), solution.n_steps());
    // (jumps, violations, sum lhs, sum rhs, worst (margin, witness))
    type Acc = (usize, usize, f64, f64, Option<(f64, String)>);
    let per_path: Vec<Acc> = (0..solution.n_paths())
        .into_par_iter()
        .map(|path| {
            let mut acc: Acc = (0, 0, 0.0, 0.0, None);
            for i in 0..n {
                let dn = ensemble.dn(path, i);
                if dn.iter().all(|k| *k == 0) {
                    continue;
                }
                let w = (0.5 * p * beta * weights.big_a(path, i)).exp();
                let u = solution.u(path, i);
                let mut x = solution.y(path, i).to_vec();
                for (j, &count) in dn.iter().enumerate() {
                    let y: Vec<f64> = (0..d).map(|a| u[a * m + j]).collect();
                    for _ in 0..count {
                        let (lhs, rhs) = lemma33_sides(&x, &y, p);
                        let (lhs, rhs) = (w * lhs, w * rhs);
                        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                        let scale = w * (norm(&xy).powf(p) + norm(&x).powf(p) + p * norm(&x).powf(p - 1.0) * norm(&y));
                        acc.0 += 1;
                        acc.2 += lhs;
                        acc.3 += rhs;
                        let margin = rhs - lhs;
                        if margin < -LEMMA33_REL_SLACK * scale {
                            acc.1 += 1;
                        }
                        if acc.4.as_ref().is_none_or(|(wm, _)| margin < *wm) {
                            acc.4 = Some((margin, format!("path={path}, step={i}, mark={j}, x={x:?}, y={y:?}")));
                        }
                        x = xy;
                    }
                }
            }
            acc
        })
        .collect();
    let mut rep = EstimateReport::new("lemma33");
    let (mut lhs, mut rhs) = (0.0, 0.0);
    let mut worst: Option<(f64, String)> = None;
    for (jumps, viol, l, r, wst) in per_path {
        rep.samples += jumps;
        rep.violations += viol;
        lhs += l;
        rhs += r;
        if let Some((mg, s)) = wst {
            if worst.as_ref().is_none_or(|(wm, _)| mg < *wm) {
                worst = Some((mg, s));
            }
        }
    }
    rep.set_sides((lhs, 0.0), (rhs, 0.0));
    rep.constant = Some(1.0);
    rep.passed = rep.violations == 0;
    if let Some((mg, s)) = worst {
        rep.extra.insert("worst_margin".into(), mg);
        rep.witness = Some(s);
    }
    rep.extra.insert("b_p".into(), b_p(p));
    rep.meta = EstimateMeta {
        p,
        beta,
        n_paths: solution.n_paths(),
        n_steps: n,
        problems: vec![solution.provenance.problem.clone()],
    };
    Ok(rep)
}
