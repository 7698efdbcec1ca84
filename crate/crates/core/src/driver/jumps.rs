use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar callback of `(t, x)` where `x` is the factor state.
pub type RateFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Finite-mark jump measure with compensator `q_j(t, x) * lambda(t, x) dt` on
/// each mark `e_j`.
#[derive(Clone)]
pub struct JumpMeasureSpec {
    marks: Vec<Vec<f64>>,
    kernel: Vec<RateFn>,
    intensity: RateFn,
    state_dependent: bool,
}

impl fmt::Debug for JumpMeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpMeasureSpec")
            .field("marks", &self.marks)
            .field("state_dependent", &self.state_dependent)
            .finish_non_exhaustive()
    }
}

impl JumpMeasureSpec {
    /// General constructor. `state_dependent` declares whether the kernel or
    /// the intensity read the factor state; state-independent specs can be
    /// simulated without factor paths.
    pub fn new(
        marks: Vec<Vec<f64>>,
        kernel: Vec<RateFn>,
        intensity: RateFn,
        state_dependent: bool,
    ) -> Result<Self> {
        if marks.len() != kernel.len() {
            return Err(Error::InvalidArgument(format!(
                "{} marks but {} kernel masses",
                marks.len(),
                kernel.len()
            )));
        }
        if let Some(first) = marks.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(Error::InvalidArgument("marks must have dimension >= 1".into()));
            }
            for (j, e) in marks.iter().enumerate() {
                if e.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "mark {j} has dimension {} instead of {dim}",
                        e.len()
                    )));
                }
                if e.iter().all(|v| *v == 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "mark {j} is the origin; the jump measure puts no mass on 0"
                    )));
                }
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("mark {j} is not finite")));
                }
            }
        }
        Ok(Self {
            marks,
            kernel,
            intensity,
            state_dependent,
        })
    }

    /// Time- and state-independent kernel masses and intensity.
    pub fn constant(marks: Vec<Vec<f64>>, masses: &[f64], intensity: f64) -> Result<Self> {
        if masses.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel masses must be finite and nonnegative: {masses:?}"
            )));
        }
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        let kernel = masses
            .iter()
            .map(|&q| Arc::new(move |_: f64, _: &[f64]| q) as RateFn)
            .collect();
        Self::new(marks, kernel, Arc::new(move |_, _| intensity), false)
    }

    /// No marks at all: a purely Brownian filtration.
    pub fn none() -> Self {
        Self {
            marks: Vec::new(),
            kernel: Vec::new(),
            intensity: Arc::new(|_, _| 0.0),
            state_dependent: false,
        }
    }

    pub fn n_marks(&self) -> usize {
        self.marks.len()
    }

    pub fn marks(&self) -> &[Vec<f64>] {
        &self.marks
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_dependent
    }

    pub fn intensity(&self, t: f64, x: &[f64]) -> f64 {
        (self.intensity)(t, x)
    }

    pub fn kernel_mass(&self, mark: usize, t: f64, x: &[f64]) -> f64 {
        (self.kernel[mark])(t, x)
    }

    /// Compensator rates `nu_j = q_j(t, x) * lambda(t, x)` for every mark.
    pub fn rates(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let lambda = self.intensity(t, x);
        for (j, slot) in out.iter_mut().enumerate().take(self.marks.len()) {
            *slot = self.kernel_mass(j, t, x) * lambda;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mark_rejected() {
        let err = JumpMeasureSpec::constant(vec![vec![0.0, 0.0]], &[1.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn negative_mass_rejected() {
        assert!(JumpMeasureSpec::constant(vec![vec![1.0]], &[-0.1], 1.0).is_err());
        assert!(JumpMeasureSpec::constant(vec![vec![1.0]], &[0.1], -1.0).is_err());
    }

    #[test]
    fn rates_multiply_mass_and_intensity() {
        let spec =
            JumpMeasureSpec::constant(vec![vec![1.0], vec![-2.0]], &[0.3, 0.7], 2.0).unwrap();
        let mut nu = [0.0; 2];
        spec.rates(0.0, &[], &mut nu);
        assert!((nu[0] - 0.6).abs() < 1e-15);
        assert!((nu[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn mismatched_mark_dimensions() {
        let k: Vec<RateFn> = vec![Arc::new(|_, _| 1.0), Arc::new(|_, _| 1.0)];
        let r = JumpMeasureSpec::new(
            vec![vec![1.0], vec![1.0, 2.0]],
            k,
            Arc::new(|_, _| 1.0),
            false,
        );
        assert!(r.is_err());
    }
}
