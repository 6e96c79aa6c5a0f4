//! One-stage theta method in endpoint form.
//!
//! The step solves `F(t1, u1, a*(u1 - u0) - b*udot0) = G(t1, u1)` with
//! `a = 1/(theta*dt)` and `b = (1-theta)/theta`, so theta = 1 is backward
//! Euler and theta = 1/2 the trapezoid rule. For theta < 1 the start-of-step
//! derivative `udot0` is recomputed from the state every step, which needs a
//! solvable mass matrix; theta = 1 never references it (b = 0) and is the
//! only variant admitted for fully implicit DAEs. No embedded error
//! estimate: runs are fixed-step.

use crate::error::{Error, Result};
use crate::newton::{self, NewtonParams};
use crate::problem::Problem;

use super::{recover, Interpolant, StepAttempt, StepStages, Stepper};

pub struct ThetaStepper {
    theta: f64,
    newton: NewtonParams,
    extrapolate: bool,
    /// Last accepted step `(t_end, dt, u_start, u_end)` for hot starts.
    prev: Option<(f64, f64, Vec<f64>, Vec<f64>)>,
}

impl ThetaStepper {
    pub fn new(theta: f64, newton: NewtonParams, extrapolate: bool) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Config(format!(
                "theta must lie in (0, 1], got {theta}"
            )));
        }
        Ok(ThetaStepper {
            theta,
            newton,
            extrapolate,
            prev: None,
        })
    }

    fn guess(&self, t1: f64, u: &[f64]) -> Vec<f64> {
        if self.extrapolate {
            if let Some((t_end, dt, u_start, u_end)) = &self.prev {
                if *dt > 0.0 {
                    let s = (t1 - t_end) / dt;
                    return u_end
                        .iter()
                        .zip(u_start)
                        .map(|(&e, &st)| e + s * (e - st))
                        .collect();
                }
            }
        }
        u.to_vec()
    }
}

impl Stepper for ThetaStepper {
    fn name(&self) -> String {
        if self.theta == 1.0 {
            "theta:beuler".into()
        } else if self.theta == 0.5 {
            "theta:cn".into()
        } else {
            format!("theta:{}", self.theta)
        }
    }

    fn order(&self) -> usize {
        if self.theta == 0.5 {
            2
        } else {
            1
        }
    }

    fn control_order(&self) -> usize {
        self.order()
    }

    fn has_error_estimate(&self) -> bool {
        false
    }

    fn attempt(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt> {
        let theta = self.theta;
        let t1 = t + dt;
        let a = 1.0 / (theta * dt);
        let b = (1.0 - theta) / theta;

        let udot0 = if theta < 1.0 {
            match recover(p.udot_from_state(t, u))? {
                Some(v) => v,
                None => return Ok(StepAttempt::failed(0, 0)),
            }
        } else {
            vec![0.0; u.len()]
        };

        let stage_udot = |x: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(u.iter().zip(&udot0))
                .map(|(&xi, (&ui, &d0))| a * (xi - ui) - b * d0)
                .collect()
        };

        let mut x = self.guess(t1, u);
        let report = newton::solve(
            &mut x,
            |x| p.implicit_residual(t1, x, &stage_udot(x), true),
            |x| p.implicit_jacobian(t1, x, &stage_udot(x), a, true),
            &self.newton,
        )?;
        let iters = report.iterations as u64;
        if !report.converged {
            return Ok(StepAttempt::failed(iters, iters));
        }

        let udot1 = stage_udot(&x);
        let slopes = if theta < 1.0 {
            vec![udot0, udot1]
        } else {
            vec![udot1]
        };

        Ok(StepAttempt {
            u_new: x,
            err: None,
            u_alt: None,
            stages: StepStages {
                states: Vec::new(),
                slopes,
            },
            newton_iters: iters,
            linear_iters: iters,
            converged: true,
        })
    }

    fn commit(&mut self, t: f64, dt: f64, u_old: &[f64], u_new: &[f64], _stages: &StepStages) {
        self.prev = Some((t + dt, dt, u_old.to_vec(), u_new.to_vec()));
    }

    fn discontinuity(&mut self) {
        self.prev = None;
    }

    fn interpolant(
        &self,
        p: &Problem,
        t0: f64,
        dt: f64,
        u0: &[f64],
        u1: &[f64],
        stages: &StepStages,
    ) -> Result<Interpolant> {
        match stages.slopes.as_slice() {
            [du0, du1] => Ok(Interpolant::Hermite {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
                du0: du0.clone(),
                du1: du1.clone(),
                dt,
            }),
            // Backward Euler stores only the endpoint slope; the start
            // derivative is recoverable when the mass is solvable.
            [du1] => match p.udot_from_state(t0, u0) {
                Ok(du0) => Ok(Interpolant::Hermite {
                    u0: u0.to_vec(),
                    u1: u1.to_vec(),
                    du0,
                    du1: du1.clone(),
                    dt,
                }),
                Err(_) => Ok(Interpolant::Linear {
                    u0: u0.to_vec(),
                    u1: u1.to_vec(),
                }),
            },
            _ => Ok(Interpolant::Linear {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
            }),
        }
    }
}
