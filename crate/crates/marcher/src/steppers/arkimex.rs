//! Additive Runge-Kutta stepping: a diagonally implicit table for the
//! implicit-form residual, an explicit table for the registered right-hand
//! side, shared abscissae.
//!
//! Each implicit stage solves `F(t_i, U, (U - Z)/(dt*a_ii)) = 0`, where `Z`
//! accumulates both slope families; stages with a zero implicit diagonal
//! take `U = Z` and read the implicit slope directly from the residual at
//! zero derivative. The `fully_implicit` switch folds `G` into the stage
//! residual and stops propagating explicit slopes, turning the scheme into
//! its DIRK part applied to `F - G`. Both switch positions run the very same
//! loop; on a problem with no registered right-hand side every `G` hook is
//! inert, so the two are bitwise identical there.

use std::sync::Arc;

use crate::error::Result;
use crate::newton::{self, NewtonParams};
use crate::problem::Problem;
use crate::tableaux::ImexTableau;

use super::{recover, Interpolant, StepAttempt, StepStages, Stepper};

pub struct ArkImexStepper {
    tab: Arc<ImexTableau>,
    newton: NewtonParams,
    fully_implicit: bool,
}

impl ArkImexStepper {
    pub fn new(tab: Arc<ImexTableau>, newton: NewtonParams, fully_implicit: bool) -> Self {
        ArkImexStepper {
            tab,
            newton,
            fully_implicit,
        }
    }
}

impl Stepper for ArkImexStepper {
    fn name(&self) -> String {
        format!("arkimex:{}", self.tab.name)
    }

    fn order(&self) -> usize {
        self.tab.order
    }

    fn control_order(&self) -> usize {
        match self.tab.embedded_order {
            Some(eo) => self.tab.order.min(eo),
            None => self.tab.order,
        }
    }

    fn has_error_estimate(&self) -> bool {
        self.tab.b_embedded.is_some()
    }

    fn attempt(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt> {
        let s = self.tab.stages();
        let n = u.len();
        let include_rhs = self.fully_implicit;
        let propagate_rhs = p.has_rhs() && !self.fully_implicit;

        let mut states: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut udot_i: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut udot_e: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut newton_iters = 0u64;

        for i in 0..s {
            let mut z = u.to_vec();
            for j in 0..i {
                let (ai, ae) = (self.tab.a_implicit.get(i, j), self.tab.a_explicit.get(i, j));
                if ai != 0.0 {
                    let c = dt * ai;
                    for (zi, ki) in z.iter_mut().zip(&udot_i[j]) {
                        *zi += c * ki;
                    }
                }
                if ae != 0.0 {
                    let c = dt * ae;
                    for (zi, ki) in z.iter_mut().zip(&udot_e[j]) {
                        *zi += c * ki;
                    }
                }
            }
            let ti = t + self.tab.c[i] * dt;
            let aii = self.tab.a_implicit.get(i, i);

            let (x, di) = if aii == 0.0 {
                // No solve: the stage value is the accumulation, and the
                // implicit slope is whatever the residual reports there.
                let r = match recover(p.implicit_residual(ti, &z, &vec![0.0; n], include_rhs))? {
                    Some(r) => r,
                    None => return Ok(StepAttempt::failed(newton_iters, newton_iters)),
                };
                let neg: Vec<f64> = r.iter().map(|x| -x).collect();
                let di = match recover(p.mass_solve(&neg))? {
                    Some(v) => v,
                    None => return Ok(StepAttempt::failed(newton_iters, newton_iters)),
                };
                (z.clone(), di)
            } else {
                let shift = 1.0 / (dt * aii);
                let mut x = z.clone();
                let report = newton::solve(
                    &mut x,
                    |x| {
                        let udot: Vec<f64> =
                            x.iter().zip(&z).map(|(&a, &b)| shift * (a - b)).collect();
                        p.implicit_residual(ti, x, &udot, include_rhs)
                    },
                    |x| {
                        let udot: Vec<f64> =
                            x.iter().zip(&z).map(|(&a, &b)| shift * (a - b)).collect();
                        p.implicit_jacobian(ti, x, &udot, shift, include_rhs)
                    },
                    &self.newton,
                )?;
                newton_iters += report.iterations as u64;
                if !report.converged {
                    return Ok(StepAttempt::failed(newton_iters, newton_iters));
                }
                let di: Vec<f64> =
                    x.iter().zip(&z).map(|(&a, &b)| shift * (a - b)).collect();
                (x, di)
            };

            let de = if propagate_rhs {
                match recover(p.eval_rhs(ti, &x))? {
                    Some(g) => match recover(p.mass_solve(&g))? {
                        Some(v) => v,
                        None => return Ok(StepAttempt::failed(newton_iters, newton_iters)),
                    },
                    None => return Ok(StepAttempt::failed(newton_iters, newton_iters)),
                }
            } else {
                vec![0.0; n]
            };

            states.push(x);
            udot_i.push(di);
            udot_e.push(de);
        }

        let mut u_new = u.to_vec();
        for j in 0..s {
            let (bi, be) = (self.tab.b_implicit[j], self.tab.b_explicit[j]);
            if bi != 0.0 {
                let c = dt * bi;
                for (ui, ki) in u_new.iter_mut().zip(&udot_i[j]) {
                    *ui += c * ki;
                }
            }
            if be != 0.0 {
                let c = dt * be;
                for (ui, ki) in u_new.iter_mut().zip(&udot_e[j]) {
                    *ui += c * ki;
                }
            }
        }

        let (err, u_alt) = match &self.tab.b_embedded {
            Some(bh) => {
                let mut e = vec![0.0; n];
                for j in 0..s {
                    let wi = dt * (self.tab.b_implicit[j] - bh[j]);
                    let we = dt * (self.tab.b_explicit[j] - bh[j]);
                    for idx in 0..n {
                        e[idx] += wi * udot_i[j][idx] + we * udot_e[j][idx];
                    }
                }
                let alt: Vec<f64> = u_new.iter().zip(&e).map(|(x, y)| x - y).collect();
                (Some(e), Some(alt))
            }
            None => (None, None),
        };

        // Combined slopes drive the shared dense-output polynomial.
        let slopes: Vec<Vec<f64>> = (0..s)
            .map(|j| {
                udot_i[j]
                    .iter()
                    .zip(&udot_e[j])
                    .map(|(&a, &b)| a + b)
                    .collect()
            })
            .collect();

        Ok(StepAttempt {
            u_new,
            err,
            u_alt,
            stages: StepStages { states, slopes },
            newton_iters,
            linear_iters: newton_iters,
            converged: true,
        })
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
        if let Some(bi) = &self.tab.binterp {
            if stages.slopes.len() == self.tab.stages() {
                return Ok(Interpolant::BStar {
                    u0: u0.to_vec(),
                    u1: u1.to_vec(),
                    dt,
                    slopes: stages.slopes.clone(),
                    binterp: bi.clone(),
                });
            }
        }
        super::hermite_or_linear(p, t0, dt, u0, u1, stages)
    }
}
