//! Run-level options shared by every stepper.

use crate::error::{Error, Result};

/// Absolute tolerance: one value for all components, or one per component.
#[derive(Debug, Clone, PartialEq)]
pub enum Atol {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Atol {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Atol::Scalar(a) => *a,
            Atol::Vector(v) => v[i],
        }
    }
}

/// Error-control tolerances. The weight for component `i` is
/// `atol_i + rtol * max(|u_i|, |u_tilde_i|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSpec {
    pub rtol: f64,
    pub atol: Atol,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            rtol: 1e-6,
            atol: Atol::Scalar(1e-6),
        }
    }
}

impl ToleranceSpec {
    pub fn new(rtol: f64, atol: f64) -> Self {
        ToleranceSpec {
            rtol,
            atol: Atol::Scalar(atol),
        }
    }

    pub fn with_vector_atol(rtol: f64, atol: Vec<f64>) -> Self {
        ToleranceSpec {
            rtol,
            atol: Atol::Vector(atol),
        }
    }

    /// Reject nonsensical tolerances before a run starts.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.rtol.is_finite() || self.rtol < 0.0 {
            return Err(Error::Config(format!(
                "rtol must be finite and nonnegative, got {}",
                self.rtol
            )));
        }
        let mut atol_all_zero = true;
        match &self.atol {
            Atol::Scalar(a) => {
                if !a.is_finite() || *a < 0.0 {
                    return Err(Error::Config(format!(
                        "atol must be finite and nonnegative, got {a}"
                    )));
                }
                atol_all_zero = *a == 0.0;
            }
            Atol::Vector(v) => {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "vector atol",
                        expected: dim,
                        got: v.len(),
                    });
                }
                for a in v {
                    if !a.is_finite() || *a < 0.0 {
                        return Err(Error::Config(format!(
                            "atol entries must be finite and nonnegative, got {a}"
                        )));
                    }
                    if *a != 0.0 {
                        atol_all_zero = false;
                    }
                }
            }
        }
        if self.rtol == 0.0 && atol_all_zero {
            return Err(Error::Config(
                "rtol and atol are both zero; error weights would vanish".into(),
            ));
        }
        Ok(())
    }
}

/// What to do when a step would carry the solution past the final time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalTimePolicy {
    /// Take the step as sized; the run may end past the final time.
    StepOver,
    /// Step past, then evaluate the dense interpolant at the final time.
    Interpolate,
    /// Truncate the last step so the run lands on the final time exactly.
    #[default]
    MatchStep,
}

/// Limits and initial data for one solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub t0: f64,
    /// Initial step size; adaptive runs rescale it, fixed runs keep it.
    pub dt0: f64,
    /// Integration stops once `t >= max_time` (subject to the policy).
    pub max_time: f64,
    /// Accepted-step budget.
    pub max_steps: usize,
    pub final_time: FinalTimePolicy,
    /// Consecutive nonlinear-solve failures tolerated before giving up;
    /// `None` retries with a smaller step until the step size underflows.
    pub max_nonlinear_failures: Option<usize>,
    /// Seed implicit stage solves by extrapolating the previous step's
    /// interpolant instead of starting from the step head. Off by default;
    /// forced off when a trajectory is attached, since checkpoint replay
    /// cannot reproduce a guess built from discarded history.
    pub stage_guess_extrapolate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            t0: 0.0,
            dt0: 1e-3,
            max_time: 1.0,
            max_steps: 10_000,
            final_time: FinalTimePolicy::MatchStep,
            max_nonlinear_failures: None,
            stage_guess_extrapolate: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.dt0.is_finite() || self.dt0 <= 0.0 {
            return Err(Error::Config(format!(
                "dt0 must be finite and positive, got {}",
                self.dt0
            )));
        }
        if !self.t0.is_finite() || !self.max_time.is_finite() {
            return Err(Error::Config("t0 and max_time must be finite".into()));
        }
        Ok(())
    }
}
