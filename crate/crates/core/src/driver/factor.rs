use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `b(t, x)` written into a `dim`-vector.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `sigma(t, x)` written as a row-major `dim x k` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `gamma(t, x, e_j)` written into a `dim`-vector; receives the mark index
/// `j` alongside the mark vector.
pub type JumpCoefficientFn = Arc<dyn Fn(f64, &[f64], usize, &[f64], &mut [f64]) + Send + Sync>;

/// Markov factor `dX = b dt + sigma dW + int gamma(e) N(dt, de)`, simulated by
/// Euler-Maruyama. The factor carries the state on which conditional
/// expectations are regressed.
#[derive(Clone)]
pub struct FactorSde {
    dim: usize,
    dim_k: usize,
    x0: Vec<f64>,
    drift: DriftFn,
    diffusion: DiffusionFn,
    jump: JumpCoefficientFn,
}

impl fmt::Debug for FactorSde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorSde")
            .field("dim", &self.dim)
            .field("dim_k", &self.dim_k)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl FactorSde {
    pub fn new(
        dim_k: usize,
        x0: Vec<f64>,
        drift: DriftFn,
        diffusion: DiffusionFn,
        jump: JumpCoefficientFn,
    ) -> Result<Self> {
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "factor initial state must be finite".into(),
            ));
        }
        Ok(Self {
            dim: x0.len(),
            dim_k,
            x0,
            drift,
            diffusion,
            jump,
        })
    }

    /// Zero-dimensional factor (deterministic problems).
    pub fn none(dim_k: usize) -> Self {
        Self {
            dim: 0,
            dim_k,
            x0: Vec::new(),
            drift: Arc::new(|_, _, _| {}),
            diffusion: Arc::new(|_, _, _| {}),
            jump: Arc::new(|_, _, _, _, _| {}),
        }
    }

    /// `X = W`, the driving Brownian motion itself.
    pub fn brownian(dim_k: usize) -> Self {
        Self::brownian_and_compensated_counts(dim_k, Vec::new())
    }

    /// `X = (W, N~_1, ..., N~_m)`: the Brownian coordinates followed by one
    /// compensated counter per mark, for constant compensator rates `nu`.
    pub fn brownian_and_compensated_counts(dim_k: usize, nu: Vec<f64>) -> Self {
        let dim = dim_k + nu.len();
        Self {
            dim,
            dim_k,
            x0: vec![0.0; dim],
            drift: Arc::new(move |_, _, out| {
                out.fill(0.0);
                for (j, v) in nu.iter().enumerate() {
                    out[dim_k + j] = -v;
                }
            }),
            diffusion: Arc::new(move |_, _, out| {
                out.fill(0.0);
                for c in 0..dim_k {
                    out[c * dim_k + c] = 1.0;
                }
            }),
            jump: Arc::new(move |_, _, j, _, out| {
                out.fill(0.0);
                if dim_k + j < out.len() {
                    out[dim_k + j] = 1.0;
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    pub fn jump(&self, t: f64, x: &[f64], mark_index: usize, mark: &[f64], out: &mut [f64]) {
        (self.jump)(t, x, mark_index, mark, out)
    }
}
