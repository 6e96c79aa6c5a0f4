//! Explicit Runge-Kutta stepping.
//!
//! Stage slopes come from `udot_from_state`, so any problem whose mass
//! matrix can be solved works, regardless of which callbacks registered it.
//! For plain right-hand-side problems that path reduces to evaluating g
//! directly, bit for bit.

use std::sync::Arc;

use crate::error::Result;
use crate::problem::Problem;
use crate::tableaux::ButcherTableau;

use super::{recover, Interpolant, StepAttempt, StepStages, Stepper};

pub struct ErkStepper {
    tab: Arc<ButcherTableau>,
}

impl ErkStepper {
    pub fn new(tab: Arc<ButcherTableau>) -> Self {
        ErkStepper { tab }
    }
}

impl Stepper for ErkStepper {
    fn name(&self) -> String {
        format!("erk:{}", self.tab.name)
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
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(s);

        for i in 0..s {
            let mut x = u.to_vec();
            for (j, k) in slopes.iter().enumerate() {
                let aij = self.tab.a.get(i, j);
                if aij != 0.0 {
                    let c = dt * aij;
                    for (xi, ki) in x.iter_mut().zip(k) {
                        *xi += c * ki;
                    }
                }
            }
            let ti = t + self.tab.c[i] * dt;
            let k = match recover(p.udot_from_state(ti, &x))? {
                Some(k) => k,
                None => return Ok(StepAttempt::failed(0, 0)),
            };
            states.push(x);
            slopes.push(k);
        }

        let mut u_new = u.to_vec();
        for (j, k) in slopes.iter().enumerate() {
            let c = dt * self.tab.b[j];
            for (ui, ki) in u_new.iter_mut().zip(k) {
                *ui += c * ki;
            }
        }

        let (err, u_alt) = match self.tab.error_weights() {
            Some(w) => {
                let mut e = vec![0.0; n];
                for (j, k) in slopes.iter().enumerate() {
                    let c = dt * w[j];
                    for (ei, ki) in e.iter_mut().zip(k) {
                        *ei += c * ki;
                    }
                }
                let alt: Vec<f64> = u_new.iter().zip(&e).map(|(x, y)| x - y).collect();
                (Some(e), Some(alt))
            }
            None => (None, None),
        };

        Ok(StepAttempt {
            u_new,
            err,
            u_alt,
            stages: StepStages { states, slopes },
            newton_iters: 0,
            linear_iters: 0,
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
            return Ok(Interpolant::BStar {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
                dt,
                slopes: stages.slopes.clone(),
                binterp: bi.clone(),
            });
        }
        if self.tab.order <= 1 {
            return Ok(Interpolant::Linear {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
            });
        }
        // The first stage slope is the derivative at t0; the endpoint slope
        // needs one extra evaluation.
        match (stages.slopes.first(), p.udot_from_state(t0 + dt, u1)) {
            (Some(du0), Ok(du1)) => Ok(Interpolant::Hermite {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
                du0: du0.clone(),
                du1,
                dt,
            }),
            _ => Ok(Interpolant::Linear {
                u0: u0.to_vec(),
                u1: u1.to_vec(),
            }),
        }
    }
}
