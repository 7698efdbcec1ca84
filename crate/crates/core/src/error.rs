use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A user-supplied intensity or kernel produced an impossible value.
    #[error("model violation at path {path}, step {step}: {detail}")]
    ModelViolation {
        path: usize,
        step: usize,
        detail: String,
    },

    #[error("numerical blow-up in {what} at path {path}, step {step}")]
    NumericalBlowup {
        what: &'static str,
        path: usize,
        step: usize,
    },

    #[error("generator returned a non-finite value at t={t}, y={y:?}, z={z:?}, u={u:?}")]
    GeneratorEvaluation {
        t: f64,
        y: Vec<f64>,
        z: Vec<f64>,
        u: Vec<f64>,
    },

    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("Gamma transform overflow at path {path}, node {node} (exponent {exponent:.3e}); rescale the horizon or coefficients")]
    TransformOverflow {
        path: usize,
        node: usize,
        exponent: f64,
    },

    #[error("singular regression design ({n_paths} paths, {basis_size} basis functions, condition estimate {condition:.3e}); use a positive ridge parameter")]
    SingularRegression {
        n_paths: usize,
        basis_size: usize,
        condition: f64,
    },

    #[error("implicit y-step did not converge at step {step}, path {path} after {iterations} iterations (Lipschitz surrogate {lipschitz:.3e})")]
    ImplicitStep {
        step: usize,
        path: usize,
        iterations: usize,
        lipschitz: f64,
    },

    #[error("Picard iteration did not converge in {iterations} iterations; distance ratios {ratios:?}")]
    NotContracting {
        iterations: usize,
        distances: Vec<f64>,
        ratios: Vec<f64>,
    },

    #[error("non-finite value in {component} component")]
    NonFinite { component: &'static str },

    #[error("degenerate input pair {index}: zero input distance")]
    DegeneratePair { index: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupted file: expected {expected} bytes, found {actual}")]
    Corruption { expected: u64, actual: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("check `{check}` failed: {source}")]
    Check {
        check: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_check(self, check: &str) -> Self {
        Error::Check {
            check: check.to_string(),
            source: Box::new(self),
        }
    }
}
