//! Derivatives of solver runs: checkpointed trajectory storage, discrete
//! adjoint sweeps, and tangent-linear (forward) propagation.
//!
//! Everything here differentiates the discrete map the stepper actually
//! computed, never the continuous equation. Gradients therefore match finite
//! differences of the solve itself, forward and adjoint results are duals of
//! one another on the same step ladder, and checkpoint replay must be
//! bitwise-deterministic for the whole scheme to hold together.
//!
//! Supported sweep families are explicit Runge-Kutta and theta methods. The
//! adjoint assumes the residual is linear in the state derivative with a
//! declared constant mass matrix (the form every built-in problem uses);
//! runs that crossed events are refused, since the handler's jump is not
//! differentiable.

mod adjoint;
mod forward;
mod trajectory;

pub use adjoint::{adjoint_solve, cost_integral, AdjointState};
pub use forward::{forward_solve, total_derivative, ForwardSensitivity, SeedKind};
pub use trajectory::{
    read_states, record_trajectory, replay_safety, CheckpointPolicy, Replayer, StepMeta,
    Trajectory,
};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::tableaux::registry::Scheme;

/// Integral term of a cost function: `q_i = integral of r_i(t, u) dt`,
/// accumulated with the quadrature of the integration scheme itself so the
/// forward and backward runs see the same discrete sum.
pub struct CostIntegrand {
    pub ncost: usize,
    /// Integrand values, length `ncost`.
    pub r: Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    /// `dr/du`, `ncost x n`.
    pub drdu: Box<dyn Fn(f64, &[f64]) -> DenseMatrix + Send + Sync>,
    /// `dr/dp`, `ncost x np`; `None` when the integrand is parameter-free.
    pub drdp: Option<Box<dyn Fn(f64, &[f64]) -> DenseMatrix + Send + Sync>>,
}

impl CostIntegrand {
    pub(crate) fn check_dims(&self, n: usize, np: usize) -> Result<()> {
        if self.ncost == 0 {
            return Err(Error::Config("cost integrand declares ncost = 0".into()));
        }
        let _ = (n, np);
        Ok(())
    }

    pub(crate) fn eval_r(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let v = (self.r)(t, u);
        if v.len() != self.ncost {
            return Err(Error::DimensionMismatch {
                what: "cost integrand r",
                expected: self.ncost,
                got: v.len(),
            });
        }
        Ok(v)
    }

    pub(crate) fn eval_drdu(&self, t: f64, u: &[f64], n: usize) -> Result<DenseMatrix> {
        let m = (self.drdu)(t, u);
        if m.rows() != self.ncost || m.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "cost integrand drdu",
                expected: self.ncost * n,
                got: m.rows() * m.cols(),
            });
        }
        Ok(m)
    }

    /// `dr/dp`, zeros when not supplied.
    pub(crate) fn eval_drdp(&self, t: f64, u: &[f64], np: usize) -> Result<DenseMatrix> {
        match &self.drdp {
            None => Ok(DenseMatrix::zeros(self.ncost, np)),
            Some(f) => {
                let m = f(t, u);
                if m.rows() != self.ncost || m.cols() != np {
                    return Err(Error::DimensionMismatch {
                        what: "cost integrand drdp",
                        expected: self.ncost * np,
                        got: m.rows() * m.cols(),
                    });
                }
                Ok(m)
            }
        }
    }
}

pub(crate) fn require_sweep_family(scheme: &Scheme) -> Result<()> {
    match scheme {
        Scheme::Erk(tab) if tab.is_explicit() => Ok(()),
        Scheme::Erk(_) => Err(Error::Config(
            "sensitivity sweeps need a strictly explicit Runge-Kutta tableau".into(),
        )),
        Scheme::Theta { .. } => Ok(()),
        other => Err(Error::Config(format!(
            "sensitivity sweeps support explicit Runge-Kutta and theta methods; \
             scheme family '{}' is not differentiated",
            other.family()
        ))),
    }
}
