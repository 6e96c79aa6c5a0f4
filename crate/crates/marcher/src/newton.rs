//! Dense Newton solve for the implicit stage equations.
//!
//! Every implicit stepper reduces a stage to "drive r(x) to zero with a
//! fresh Jacobian each iteration". The loop below is that, with 2-norm
//! convergence tests and optional Armijo backtracking. Iteration count
//! equals the number of linear solves; the initial guess is tested first,
//! so an already-converged start reports zero iterations.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone)]
pub struct NewtonParams {
    pub max_iterations: usize,
    /// Absolute 2-norm target; `None` uses `1e-12 * sqrt(n)`.
    pub abs_tol: Option<f64>,
    /// Converge when the residual drops below `rel_tol * ||r0||`.
    pub rel_tol: f64,
    /// Converge when the update is below `step_tol * ||x||`. Shifted stage
    /// residuals carry a rounding floor near `sigma * ulp(u)` that can sit
    /// above the absolute target at small steps; once updates are O(eps)
    /// relative the iterate has stopped moving and the stage is done.
    pub step_tol: f64,
    /// Armijo backtracking: halve the step until the residual decreases.
    pub line_search: bool,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            max_iterations: 10,
            abs_tol: None,
            rel_tol: 1e-8,
            step_tol: 1e-10,
            line_search: false,
        }
    }
}

/// Why the iteration stopped. The first three mean convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStop {
    AbsTol,
    RelTol,
    StepTol,
    MaxIterations,
    LinearSolveFailed,
    NonFiniteResidual,
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub converged: bool,
    pub reason: NewtonStop,
    /// Linear solves performed.
    pub iterations: usize,
    pub residual_norm: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `r(x) = 0` in place. Structural failures (bad dimensions, missing
/// callbacks) propagate as errors; non-convergence is an ordinary report.
pub fn solve<R, J>(
    x: &mut [f64],
    mut residual: R,
    mut jacobian: J,
    params: &NewtonParams,
) -> Result<NewtonReport>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<DenseMatrix>,
{
    let n = x.len();
    let abs_tol = params
        .abs_tol
        .unwrap_or_else(|| 1e-12 * (n as f64).sqrt());

    let mut r = match residual(x) {
        Ok(r) => r,
        Err(Error::NonFinite { .. }) => {
            return Ok(NewtonReport {
                converged: false,
                reason: NewtonStop::NonFiniteResidual,
                iterations: 0,
                residual_norm: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let r0_norm = norm2(&r);
    let mut r_norm = r0_norm;

    let done = |norm: f64, iters: usize| -> Option<NewtonReport> {
        if norm <= abs_tol {
            return Some(NewtonReport {
                converged: true,
                reason: NewtonStop::AbsTol,
                iterations: iters,
                residual_norm: norm,
            });
        }
        if params.rel_tol > 0.0 && norm <= params.rel_tol * r0_norm {
            return Some(NewtonReport {
                converged: true,
                reason: NewtonStop::RelTol,
                iterations: iters,
                residual_norm: norm,
            });
        }
        None
    };

    if let Some(rep) = done(r_norm, 0) {
        return Ok(rep);
    }

    for it in 1..=params.max_iterations {
        let j = match jacobian(x) {
            Ok(j) => j,
            Err(Error::NonFinite { .. }) => {
                return Ok(NewtonReport {
                    converged: false,
                    reason: NewtonStop::NonFiniteResidual,
                    iterations: it - 1,
                    residual_norm: r_norm,
                })
            }
            Err(e) => return Err(e),
        };
        let lu = match linalg::lu_factor(j) {
            Ok(lu) => lu,
            Err(Error::SingularMatrix { .. }) => {
                return Ok(NewtonReport {
                    converged: false,
                    reason: NewtonStop::LinearSolveFailed,
                    iterations: it - 1,
                    residual_norm: r_norm,
                })
            }
            Err(e) => return Err(e),
        };
        let delta = linalg::lu_solve(&lu, &r);

        let mut lambda = 1.0;
        let mut trial = vec![0.0; n];
        let (new_r, new_norm) = loop {
            for i in 0..n {
                trial[i] = x[i] - lambda * delta[i];
            }
            match residual(&trial) {
                Ok(rt) => {
                    let nt = norm2(&rt);
                    if !params.line_search
                        || nt <= (1.0 - 1e-4 * lambda) * r_norm
                        || lambda <= 1.0 / 1024.0
                    {
                        break (rt, nt);
                    }
                    lambda *= 0.5;
                }
                Err(Error::NonFinite { .. }) => {
                    if params.line_search && lambda > 1.0 / 1024.0 {
                        // Overshot into a bad region; retreat and retry.
                        lambda *= 0.5;
                        continue;
                    }
                    return Ok(NewtonReport {
                        converged: false,
                        reason: NewtonStop::NonFiniteResidual,
                        iterations: it,
                        residual_norm: r_norm,
                    });
                }
                Err(e) => return Err(e),
            }
        };
        x.copy_from_slice(&trial);
        r = new_r;
        r_norm = new_norm;
        if !r_norm.is_finite() {
            return Ok(NewtonReport {
                converged: false,
                reason: NewtonStop::NonFiniteResidual,
                iterations: it,
                residual_norm: r_norm,
            });
        }

        if let Some(rep) = done(r_norm, it) {
            return Ok(rep);
        }
        let step_norm = lambda * norm2(&delta);
        if step_norm <= params.step_tol * norm2(x) {
            return Ok(NewtonReport {
                converged: true,
                reason: NewtonStop::StepTol,
                iterations: it,
                residual_norm: r_norm,
            });
        }
    }

    Ok(NewtonReport {
        converged: false,
        reason: NewtonStop::MaxIterations,
        iterations: params.max_iterations,
        residual_norm: r_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic_takes_five_solves() {
        // x^2 - 4 = 0 from x = 3 at abs_tol 1e-12: residuals shrink
        // quadratically (5, 6.9e-1, 2.6e-2, 4.1e-5, 1.0e-10, <1e-12).
        let mut x = vec![3.0];
        let params = NewtonParams {
            abs_tol: Some(1e-12),
            rel_tol: 0.0,
            ..Default::default()
        };
        let rep = solve(
            &mut x,
            |x| Ok(vec![x[0] * x[0] - 4.0]),
            |x| Ok(DenseMatrix::from_rows(&[vec![2.0 * x[0]]])),
            &params,
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.reason, NewtonStop::AbsTol);
        assert_eq!(rep.iterations, 5);
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_system_converges_in_one_iteration() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let b = [1.0, 2.0];
        let mut x = vec![0.0, 0.0];
        let aj = a.clone();
        let rep = solve(
            &mut x,
            move |x| {
                let ax = a.matvec(x);
                Ok(vec![ax[0] - b[0], ax[1] - b[1]])
            },
            move |_| Ok(aj.clone()),
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn converged_guess_costs_zero_iterations() {
        let mut x = vec![2.0];
        let rep = solve(
            &mut x,
            |x| Ok(vec![x[0] * x[0] - 4.0]),
            |x| Ok(DenseMatrix::from_rows(&[vec![2.0 * x[0]]])),
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(x[0], 2.0);
    }

    #[test]
    fn singular_jacobian_reports_linear_failure() {
        let mut x = vec![1.0, 1.0];
        let rep = solve(
            &mut x,
            |x| Ok(vec![x[0] + x[1] - 1.0, 2.0 * x[0] + 2.0 * x[1] - 2.0]),
            |_| {
                Ok(DenseMatrix::from_rows(&[
                    vec![1.0, 1.0],
                    vec![2.0, 2.0],
                ]))
            },
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.reason, NewtonStop::LinearSolveFailed);
    }

    #[test]
    fn nonfinite_residual_is_reported_not_propagated() {
        let mut x = vec![1.0];
        let rep = solve(
            &mut x,
            |_| {
                Err(crate::error::Error::NonFinite {
                    what: "residual",
                    index: 0,
                })
            },
            |_| Ok(DenseMatrix::identity(1)),
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.reason, NewtonStop::NonFiniteResidual);
    }

    #[test]
    fn max_iterations_reported_when_stalled() {
        // Residual never shrinks: constant 1 with identity Jacobian walks
        // forever without converging.
        let mut x = vec![0.0];
        let params = NewtonParams {
            max_iterations: 3,
            ..Default::default()
        };
        let rep = solve(
            &mut x,
            |_| Ok(vec![1.0]),
            |_| Ok(DenseMatrix::identity(1)),
            &params,
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.reason, NewtonStop::MaxIterations);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn line_search_handles_overshoot() {
        // atan has a tiny basin for full Newton: from x = 2 the undamped
        // iteration diverges, the damped one contracts.
        let params = NewtonParams {
            max_iterations: 50,
            abs_tol: Some(1e-10),
            rel_tol: 0.0,
            line_search: true,
            ..Default::default()
        };
        let mut x = vec![2.0];
        let rep = solve(
            &mut x,
            |x| Ok(vec![x[0].atan()]),
            |x| Ok(DenseMatrix::from_rows(&[vec![1.0 / (1.0 + x[0] * x[0])]])),
            &params,
        )
        .unwrap();
        assert!(rep.converged, "damped Newton should land: {rep:?}");
        assert!(x[0].abs() < 1e-9);
    }
}
