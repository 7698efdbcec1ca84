use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::block::Block3;
use super::factor::FactorSde;
use super::grid::TimeGrid;
use super::jumps::JumpMeasureSpec;
use crate::error::{Error, Result};

/// Largest per-step Poisson mean we are willing to sample.
const MAX_POISSON_MEAN: f64 = 1e8;

/// Simulated noises and factor states on a common grid.
///
/// Layouts: `brownian` and `counts`/`rates` are `(path, step, .)`, the factor
/// is `(path, node, .)` with `n_steps + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    seed: u64,
    brownian: Block3<f64>,
    counts: Block3<u32>,
    rates: Block3<f64>,
    factor: Block3<f64>,
}

/// Brownian increments use stream `2 * path`, jump counts `2 * path + 1`.
fn path_rngs(seed: u64, path: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut w = ChaCha8Rng::seed_from_u64(seed);
    w.set_stream(2 * path as u64);
    let mut n = ChaCha8Rng::seed_from_u64(seed);
    n.set_stream(2 * path as u64 + 1);
    (w, n)
}

fn draw_brownian(rng: &mut ChaCha8Rng, dt: f64, out: &mut [f64]) {
    let s = dt.sqrt();
    for v in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = g * s;
    }
}

fn draw_counts(
    rng: &mut ChaCha8Rng,
    rates: &[f64],
    dt: f64,
    path: usize,
    step: usize,
    out: &mut [u32],
) -> Result<()> {
    for (j, (&nu, slot)) in rates.iter().zip(out.iter_mut()).enumerate() {
        let mean = nu * dt;
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::ModelViolation {
                path,
                step,
                detail: format!("compensator rate for mark {j} is {nu}"),
            });
        }
        if mean > MAX_POISSON_MEAN {
            return Err(Error::ModelViolation {
                path,
                step,
                detail: format!("Poisson mean {mean:.3e} for mark {j} is unreasonably large"),
            });
        }
        *slot = if mean == 0.0 {
            0
        } else {
            let d = Poisson::new(mean).map_err(|e| Error::ModelViolation {
                path,
                step,
                detail: e.to_string(),
            })?;
            let draw: f64 = d.sample(rng);
            draw as u32
        };
    }
    Ok(())
}

struct EulerScratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jump: Vec<f64>,
}

impl EulerScratch {
    fn new(sde: &FactorSde) -> Self {
        Self {
            drift: vec![0.0; sde.dim()],
            diffusion: vec![0.0; sde.dim() * sde.dim_k()],
            jump: vec![0.0; sde.dim()],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn euler_step(
    sde: &FactorSde,
    marks: &[Vec<f64>],
    t: f64,
    dt: f64,
    x: &[f64],
    dw: &[f64],
    dn: &[u32],
    scratch: &mut EulerScratch,
    next: &mut [f64],
) {
    let d = sde.dim();
    let k = sde.dim_k();
    sde.drift(t, x, &mut scratch.drift);
    sde.diffusion(t, x, &mut scratch.diffusion);
    for c in 0..d {
        let mut v = x[c] + scratch.drift[c] * dt;
        let row = &scratch.diffusion[c * k..(c + 1) * k];
        for (s, w) in row.iter().zip(dw) {
            v += s * w;
        }
        next[c] = v;
    }
    for (j, &count) in dn.iter().enumerate() {
        if count == 0 {
            continue;
        }
        sde.jump(t, x, j, &marks[j], &mut scratch.jump);
        for c in 0..d {
            next[c] += scratch.jump[c] * count as f64;
        }
    }
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    Ok(())
}

/// I.i.d. Gaussian increments with per-component variance `dt_i`, shape
/// `(n_paths, n_steps, dim_k)`.
pub fn simulate_brownian(
    grid: &TimeGrid,
    n_paths: usize,
    dim_k: usize,
    seed: u64,
) -> Result<Block3<f64>> {
    check_paths(n_paths)?;
    if dim_k == 0 {
        return Err(Error::InvalidArgument("dim_k must be at least 1".into()));
    }
    let n = grid.n_steps();
    let mut out = Block3::zeros(n_paths, n, dim_k);
    out.as_mut_slice()
        .par_chunks_mut(n * dim_k)
        .enumerate()
        .for_each(|(p, chunk)| {
            let (mut rng, _) = path_rngs(seed, p);
            for i in 0..n {
                draw_brownian(&mut rng, grid.dt(i), &mut chunk[i * dim_k..(i + 1) * dim_k]);
            }
        });
    Ok(out)
}

/// Poisson counts per `(path, step, mark)` with mean `q_j * lambda * dt_i`,
/// the compensator frozen at the left endpoint. Returns the counts and the
/// rates used. `factor` (shape `(n_paths, n_steps + 1, d_X)`) is required when
/// the spec reads the state.
pub fn simulate_jumps(
    grid: &TimeGrid,
    spec: &JumpMeasureSpec,
    factor: Option<&Block3<f64>>,
    n_paths: usize,
    seed: u64,
) -> Result<(Block3<u32>, Block3<f64>)> {
    check_paths(n_paths)?;
    let n = grid.n_steps();
    let m = spec.n_marks();
    if let Some(f) = factor {
        if f.n_paths() != n_paths || f.n_rows() != grid.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "factor block shape {:?} does not match {n_paths} paths on {} nodes",
                f.shape(),
                grid.n_nodes()
            )));
        }
    } else if spec.is_state_dependent() {
        return Err(Error::InvalidArgument(
            "state-dependent jump spec needs factor states".into(),
        ));
    }
    let per_path: Vec<(Vec<u32>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let (_, mut rng) = path_rngs(seed, p);
            let mut counts = vec![0u32; n * m];
            let mut rates = vec![0.0; n * m];
            for i in 0..n {
                let x: &[f64] = factor.map(|f| f.row(p, i)).unwrap_or(&[]);
                let r = &mut rates[i * m..(i + 1) * m];
                spec.rates(grid.time(i), x, r);
                draw_counts(&mut rng, r, grid.dt(i), p, i, &mut counts[i * m..(i + 1) * m])?;
            }
            Ok((counts, rates))
        })
        .collect::<Result<_>>()?;
    let mut counts = Vec::with_capacity(n_paths * n * m);
    let mut rates = Vec::with_capacity(n_paths * n * m);
    for (c, r) in per_path {
        counts.extend(c);
        rates.extend(r);
    }
    Ok((
        Block3::from_vec(n_paths, n, m, counts),
        Block3::from_vec(n_paths, n, m, rates),
    ))
}

/// Euler-Maruyama recursion for the factor driven by given noise blocks.
pub fn simulate_factor(
    grid: &TimeGrid,
    sde: &FactorSde,
    marks: &[Vec<f64>],
    brownian: &Block3<f64>,
    counts: &Block3<u32>,
) -> Result<Block3<f64>> {
    let n = grid.n_steps();
    let n_paths = brownian.n_paths();
    if brownian.n_rows() != n || brownian.width() != sde.dim_k() {
        return Err(Error::InvalidArgument(format!(
            "brownian block {:?} does not match {n} steps of dimension {}",
            brownian.shape(),
            sde.dim_k()
        )));
    }
    if counts.n_paths() != n_paths || counts.n_rows() != n || counts.width() != marks.len() {
        return Err(Error::InvalidArgument(format!(
            "count block {:?} does not match brownian block {:?}",
            counts.shape(),
            brownian.shape()
        )));
    }
    let d = sde.dim();
    let mut out = Block3::zeros(n_paths, n + 1, d);
    if d == 0 {
        return Ok(out);
    }
    let failures: Vec<Option<(usize, usize)>> = out
        .as_mut_slice()
        .par_chunks_mut((n + 1) * d)
        .enumerate()
        .map(|(p, chunk)| {
            let mut scratch = EulerScratch::new(sde);
            chunk[..d].copy_from_slice(sde.x0());
            for i in 0..n {
                let (head, tail) = chunk.split_at_mut((i + 1) * d);
                let x = &head[i * d..];
                let next = &mut tail[..d];
                euler_step(
                    sde,
                    marks,
                    grid.time(i),
                    grid.dt(i),
                    x,
                    brownian.row(p, i),
                    counts.row(p, i),
                    &mut scratch,
                    next,
                );
                if next.iter().any(|v| !v.is_finite()) {
                    return Some((p, i));
                }
            }
            None
        })
        .collect();
    if let Some((path, step)) = failures.into_iter().flatten().next() {
        return Err(Error::NumericalBlowup {
            what: "factor",
            path,
            step,
        });
    }
    Ok(out)
}

struct PathDraw {
    brownian: Vec<f64>,
    counts: Vec<u32>,
    rates: Vec<f64>,
    factor: Vec<f64>,
}

/// Brownian increments, jump counts and factor states simulated jointly
/// path by path, so the compensator may depend on the current state.
///
/// For state-independent specs this coincides bit-for-bit with composing
/// [`simulate_brownian`], [`simulate_jumps`] and [`simulate_factor`].
pub fn simulate_ensemble(
    grid: &TimeGrid,
    sde: &FactorSde,
    spec: &JumpMeasureSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_paths(n_paths)?;
    let k = sde.dim_k();
    if k == 0 {
        return Err(Error::InvalidArgument("dim_k must be at least 1".into()));
    }
    let n = grid.n_steps();
    let m = spec.n_marks();
    let d = sde.dim();
    let marks = spec.marks();
    let draws: Vec<PathDraw> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let (mut rng_w, mut rng_n) = path_rngs(seed, p);
            let mut scratch = EulerScratch::new(sde);
            let mut out = PathDraw {
                brownian: vec![0.0; n * k],
                counts: vec![0; n * m],
                rates: vec![0.0; n * m],
                factor: vec![0.0; (n + 1) * d],
            };
            out.factor[..d].copy_from_slice(sde.x0());
            for i in 0..n {
                let t = grid.time(i);
                let dt = grid.dt(i);
                let dw = &mut out.brownian[i * k..(i + 1) * k];
                draw_brownian(&mut rng_w, dt, dw);
                let (head, tail) = out.factor.split_at_mut((i + 1) * d);
                let x = &head[i * d..];
                let r = &mut out.rates[i * m..(i + 1) * m];
                spec.rates(t, x, r);
                let dn = &mut out.counts[i * m..(i + 1) * m];
                draw_counts(&mut rng_n, r, dt, p, i, dn)?;
                if d > 0 {
                    let next = &mut tail[..d];
                    euler_step(sde, marks, t, dt, x, dw, dn, &mut scratch, next);
                    if next.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NumericalBlowup {
                            what: "factor",
                            path: p,
                            step: i,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut brownian = Vec::with_capacity(n_paths * n * k);
    let mut counts = Vec::with_capacity(n_paths * n * m);
    let mut rates = Vec::with_capacity(n_paths * n * m);
    let mut factor = Vec::with_capacity(n_paths * (n + 1) * d);
    for dr in draws {
        brownian.extend(dr.brownian);
        counts.extend(dr.counts);
        rates.extend(dr.rates);
        factor.extend(dr.factor);
    }
    Ok(PathEnsemble {
        grid: grid.clone(),
        seed,
        brownian: Block3::from_vec(n_paths, n, k, brownian),
        counts: Block3::from_vec(n_paths, n, m, counts),
        rates: Block3::from_vec(n_paths, n, m, rates),
        factor: Block3::from_vec(n_paths, n + 1, d, factor),
    })
}

impl PathEnsemble {
    /// Assemble from precomputed blocks; shapes are validated.
    pub fn from_parts(
        grid: TimeGrid,
        seed: u64,
        brownian: Block3<f64>,
        counts: Block3<u32>,
        rates: Block3<f64>,
        factor: Block3<f64>,
    ) -> Result<Self> {
        let n = grid.n_steps();
        let n_paths = brownian.n_paths();
        let ok = brownian.n_rows() == n
            && counts.shape() == rates.shape()
            && counts.n_paths() == n_paths
            && counts.n_rows() == n
            && factor.n_paths() == n_paths
            && factor.n_rows() == n + 1;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "inconsistent ensemble blocks: brownian {:?}, counts {:?}, rates {:?}, factor {:?} on {n} steps",
                brownian.shape(),
                counts.shape(),
                rates.shape(),
                factor.shape()
            )));
        }
        Ok(Self {
            grid,
            seed,
            brownian,
            counts,
            rates,
            factor,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.brownian.n_paths()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn dim_k(&self) -> usize {
        self.brownian.width()
    }

    pub fn n_marks(&self) -> usize {
        self.counts.width()
    }

    pub fn dim_x(&self) -> usize {
        self.factor.width()
    }

    #[inline]
    pub fn dw(&self, path: usize, step: usize) -> &[f64] {
        self.brownian.row(path, step)
    }

    #[inline]
    pub fn dn(&self, path: usize, step: usize) -> &[u32] {
        self.counts.row(path, step)
    }

    /// Compensator rates `nu_j` frozen on step `step`.
    #[inline]
    pub fn nu(&self, path: usize, step: usize) -> &[f64] {
        self.rates.row(path, step)
    }

    #[inline]
    pub fn x(&self, path: usize, node: usize) -> &[f64] {
        self.factor.row(path, node)
    }

    /// `dN - nu dt` for one mark.
    #[inline]
    pub fn compensated(&self, path: usize, step: usize, mark: usize) -> f64 {
        self.dn(path, step)[mark] as f64 - self.nu(path, step)[mark] * self.grid.dt(step)
    }

    pub fn brownian(&self) -> &Block3<f64> {
        &self.brownian
    }

    pub fn counts(&self) -> &Block3<u32> {
        &self.counts
    }

    pub fn rates(&self) -> &Block3<f64> {
        &self.rates
    }

    pub fn factor(&self) -> &Block3<f64> {
        &self.factor
    }

    /// Total jump counts per mark on `[0, T]`.
    pub fn total_counts(&self, path: usize) -> Vec<u64> {
        let mut out = vec![0u64; self.n_marks()];
        for i in 0..self.n_steps() {
            for (o, c) in out.iter_mut().zip(self.dn(path, i)) {
                *o += *c as u64;
            }
        }
        out
    }

    /// Terminal compensated counts `N_T - int nu dt` per mark.
    pub fn total_compensated(&self, path: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_marks()];
        for i in 0..self.n_steps() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.compensated(path, i, j);
            }
        }
        out
    }

    /// Same paths observed on every `factor`-th node: increments and counts
    /// are summed, rates averaged in time, factor states subsampled.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let nc = grid.n_steps();
        let (n_paths, k, m, d) = (self.n_paths(), self.dim_k(), self.n_marks(), self.dim_x());
        let mut brownian = Block3::zeros(n_paths, nc, k);
        let mut counts = Block3::zeros(n_paths, nc, m);
        let mut rates = Block3::zeros(n_paths, nc, m);
        let mut states = Block3::zeros(n_paths, nc + 1, d);
        for p in 0..n_paths {
            for c in 0..nc {
                let dt_c = grid.dt(c);
                for f in 0..factor {
                    let i = c * factor + f;
                    let w = self.grid.dt(i) / dt_c;
                    for (o, v) in brownian.row_mut(p, c).iter_mut().zip(self.dw(p, i)) {
                        *o += v;
                    }
                    for (o, v) in counts.row_mut(p, c).iter_mut().zip(self.dn(p, i)) {
                        *o += v;
                    }
                    for (o, v) in rates.row_mut(p, c).iter_mut().zip(self.nu(p, i)) {
                        *o += v * w;
                    }
                }
            }
            for c in 0..=nc {
                states.row_mut(p, c).copy_from_slice(self.x(p, c * factor));
            }
        }
        Ok(Self {
            grid,
            seed: self.seed,
            brownian,
            counts,
            rates,
            factor: states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn poisson_spec(masses: &[f64], lambda: f64) -> JumpMeasureSpec {
        let marks = (0..masses.len()).map(|j| vec![1.0 + j as f64]).collect();
        JumpMeasureSpec::constant(marks, masses, lambda).unwrap()
    }

    #[test]
    fn brownian_variance_within_four_sigma() {
        let n_paths = 100_000;
        let grid = TimeGrid::uniform(0.05, 5).unwrap();
        let w = simulate_brownian(&grid, n_paths, 1, 3).unwrap();
        for i in 0..grid.n_steps() {
            let dt = grid.dt(i);
            let vals: Vec<f64> = (0..n_paths).map(|p| w.row(p, i)[0]).collect();
            let mean = vals.iter().sum::<f64>() / n_paths as f64;
            let var = vals.iter().map(|v| v * v).sum::<f64>() / n_paths as f64;
            // Var of the squared Gaussian is 2 dt^2.
            let se_var = (2.0f64).sqrt() * dt / (n_paths as f64).sqrt();
            assert!((var - dt).abs() < 4.0 * se_var, "step {i}: {var} vs {dt}");
            assert!(mean.abs() < 4.0 * (dt / n_paths as f64).sqrt());
        }
    }

    #[test]
    fn brownian_is_deterministic_and_shaped() {
        let grid = TimeGrid::uniform(1.0, 7).unwrap();
        let a = simulate_brownian(&grid, 1, 3, 99).unwrap();
        let b = simulate_brownian(&grid, 1, 3, 99).unwrap();
        assert_eq!(a.shape(), (1, 7, 3));
        assert_eq!(a, b);
        let c = simulate_brownian(&grid, 1, 3, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_mean_matches_intensity() {
        let n_paths = 100_000;
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let spec = poisson_spec(&[1.0], 2.0);
        let (counts, rates) = simulate_jumps(&grid, &spec, None, n_paths, 5).unwrap();
        assert_eq!(rates.row(0, 0), &[2.0]);
        for i in 0..2 {
            let mean = (0..n_paths).map(|p| counts.row(p, i)[0] as f64).sum::<f64>()
                / n_paths as f64;
            assert!((mean - 1.0).abs() < 4.0 * (1.0 / n_paths as f64).sqrt(), "{mean}");
        }
    }

    #[test]
    fn poisson_splitting_across_marks() {
        let n_paths = 100_000;
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let spec = poisson_spec(&[0.3, 0.7], 1.0);
        let (counts, _) = simulate_jumps(&grid, &spec, None, n_paths, 6).unwrap();
        for (j, target) in [0.3, 0.7].into_iter().enumerate() {
            let mean = (0..n_paths).map(|p| counts.row(p, 0)[j] as f64).sum::<f64>()
                / n_paths as f64;
            assert!(
                (mean - target).abs() < 4.0 * (target / n_paths as f64).sqrt(),
                "mark {j}: {mean}"
            );
        }
    }

    #[test]
    fn null_intensity_gives_no_jumps() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let spec = poisson_spec(&[1.0, 1.0], 0.0);
        let (counts, _) = simulate_jumps(&grid, &spec, None, 50, 1).unwrap();
        assert!(counts.as_slice().iter().all(|&c| c == 0));
    }

    #[test]
    fn negative_rate_is_a_model_violation() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let spec = JumpMeasureSpec::new(
            vec![vec![1.0]],
            vec![Arc::new(|t, _| if t > 0.3 { -1.0 } else { 1.0 })],
            Arc::new(|_, _| 1.0),
            false,
        )
        .unwrap();
        let err = simulate_jumps(&grid, &spec, None, 3, 1).unwrap_err();
        assert!(matches!(err, Error::ModelViolation { step: 2, .. }), "{err}");
    }

    #[test]
    fn state_dependent_spec_needs_factor() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let spec = JumpMeasureSpec::new(
            vec![vec![1.0]],
            vec![Arc::new(|_, x| x[0].abs())],
            Arc::new(|_, _| 1.0),
            true,
        )
        .unwrap();
        assert!(simulate_jumps(&grid, &spec, None, 3, 1).is_err());
    }

    #[test]
    fn brownian_factor_is_cumulative_sum() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let sde = FactorSde::brownian(2);
        let w = simulate_brownian(&grid, 4, 2, 8).unwrap();
        let counts = Block3::zeros(4, 16, 0);
        let x = simulate_factor(&grid, &sde, &[], &w, &counts).unwrap();
        for p in 0..4 {
            let mut acc = [0.0; 2];
            for i in 0..16 {
                acc[0] += w.row(p, i)[0];
                acc[1] += w.row(p, i)[1];
                assert_eq!(x.row(p, i + 1), &acc);
            }
        }
    }

    #[test]
    fn counting_factor_accumulates_jumps() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let spec = poisson_spec(&[1.0], 3.0);
        let sde = FactorSde::new(
            1,
            vec![0.0],
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, _, e, out| out.copy_from_slice(e)),
        )
        .unwrap();
        let ens = simulate_ensemble(&grid, &sde, &spec, 30, 2).unwrap();
        for p in 0..30 {
            let mut acc = 0.0;
            for i in 0..20 {
                acc += ens.dn(p, i)[0] as f64;
                assert_eq!(ens.x(p, i + 1)[0], acc);
            }
        }
    }

    #[test]
    fn euler_decay_matches_exponential() {
        let grid = TimeGrid::uniform(1.0, 1 << 10).unwrap();
        let sde = FactorSde::new(
            1,
            vec![1.0],
            Arc::new(|_, x, out| out[0] = -x[0]),
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, _, _, out| out.fill(0.0)),
        )
        .unwrap();
        let ens = simulate_ensemble(&grid, &sde, &JumpMeasureSpec::none(), 2, 0).unwrap();
        let xt = ens.x(0, 1 << 10)[0];
        assert!((xt - (-1.0f64).exp()).abs() < 1e-2, "{xt}");
    }

    #[test]
    fn blowup_is_reported_with_location() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let sde = FactorSde::new(
            1,
            vec![1.0],
            Arc::new(|_, x, out| out[0] = x[0] * x[0] * 1e100),
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, _, _, out| out.fill(0.0)),
        )
        .unwrap();
        let err = simulate_ensemble(&grid, &sde, &JumpMeasureSpec::none(), 2, 0).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { path: 0, .. }), "{err}");
    }

    #[test]
    fn coupled_equals_composed_for_constant_rates() {
        let grid = TimeGrid::uniform(1.0, 12).unwrap();
        let spec = poisson_spec(&[0.4, 0.6], 2.0);
        let sde = FactorSde::brownian_and_compensated_counts(2, vec![0.8, 1.2]);
        let ens = simulate_ensemble(&grid, &sde, &spec, 25, 17).unwrap();
        let w = simulate_brownian(&grid, 25, 2, 17).unwrap();
        let (counts, rates) = simulate_jumps(&grid, &spec, None, 25, 17).unwrap();
        let x = simulate_factor(&grid, &sde, spec.marks(), &w, &counts).unwrap();
        assert_eq!(ens.brownian(), &w);
        assert_eq!(ens.counts(), &counts);
        assert_eq!(ens.rates(), &rates);
        assert_eq!(ens.factor(), &x);
    }

    #[test]
    fn paths_do_not_depend_on_ensemble_size() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let spec = poisson_spec(&[1.0], 1.0);
        let sde = FactorSde::brownian(1);
        let small = simulate_ensemble(&grid, &sde, &spec, 3, 4).unwrap();
        let large = simulate_ensemble(&grid, &sde, &spec, 40, 4).unwrap();
        for p in 0..3 {
            assert_eq!(small.brownian().path(p), large.brownian().path(p));
            assert_eq!(small.counts().path(p), large.counts().path(p));
        }
    }

    #[test]
    fn independence_probe() {
        let n_paths = 40_000;
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let spec = poisson_spec(&[1.0], 2.0);
        let ens = simulate_ensemble(&grid, &FactorSde::none(2), &spec, n_paths, 9).unwrap();
        let corr = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| {
            let n = n_paths as f64;
            let (ma, mb) = (
                (0..n_paths).map(a).sum::<f64>() / n,
                (0..n_paths).map(b).sum::<f64>() / n,
            );
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for p in 0..n_paths {
                let (x, y) = (a(p) - ma, b(p) - mb);
                sab += x * y;
                saa += x * x;
                sbb += y * y;
            }
            sab / (saa * sbb).sqrt()
        };
        let bound = 4.0 / (n_paths as f64).sqrt();
        let w0 = |p: usize| ens.dw(p, 0)[0];
        let w1 = |p: usize| ens.dw(p, 0)[1];
        let n0 = |p: usize| ens.dn(p, 0)[0] as f64;
        assert!(corr(&w0, &w1).abs() < bound);
        assert!(corr(&w0, &n0).abs() < bound);
        assert!(corr(&w1, &n0).abs() < bound);
    }

    #[test]
    fn coarsening_sums_increments() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let spec = poisson_spec(&[1.0], 3.0);
        let sde = FactorSde::brownian_and_compensated_counts(1, vec![3.0]);
        let ens = simulate_ensemble(&grid, &sde, &spec, 5, 1).unwrap();
        let c = ens.coarsen(4).unwrap();
        assert_eq!(c.n_steps(), 2);
        for p in 0..5 {
            let w: f64 = (0..4).map(|i| ens.dw(p, i)[0]).sum();
            assert!((c.dw(p, 0)[0] - w).abs() < 1e-15);
            let n: u32 = (4..8).map(|i| ens.dn(p, i)[0]).sum();
            assert_eq!(c.dn(p, 1)[0], n);
            assert_eq!(c.x(p, 2), ens.x(p, 8));
            assert!((c.nu(p, 0)[0] - 3.0).abs() < 1e-12);
        }
    }
}
