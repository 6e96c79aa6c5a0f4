//! Rosenbrock-W stepping in transformed stage variables.
//!
//! Stages are the variables `v = Gamma * k`, which folds the Gamma coupling
//! into one linear solve per stage:
//!
//! ```text
//! (M/(dt*g_ii) - J) v_i = f(t_i, X_i) + (1/dt) * M * sum_j d_ij v_j
//! X_i = u0 + sum_j omega_ij v_j,  u1 = u0 + sum_j m_j v_j
//! ```
//!
//! Both sides are assembled through the problem's implicit residual, so any
//! registered form works: the right-hand side is
//! `-implicit_residual(t_i, X_i, zdot_i)` with
//! `zdot_i = -(1/dt) sum_j d_ij v_j`, and the stage matrix is the shifted
//! Jacobian at the step start. J is evaluated once per step (never per
//! stage); W-tableaux keep their order anyway, and with reuse enabled the
//! factorization survives across steps until the step size changes or
//! [`JACOBIAN_REUSE_LIMIT`] steps pass. Rows with a zero Gamma diagonal
//! need no solve: with `s_i = sum_j d_ij v_j` and `gh` the substituted
//! diagonal, `v_i = gh * (s_i + dt * M^-1(f_i + gh * J * s_i))`.
//!
//! The time-derivative Gamma terms for non-autonomous right-hand sides are
//! not applied; problems with explicit time dependence in the stiff part see
//! the usual W-method order reduction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, LuFactors};
use crate::matrix::DenseMatrix;
use crate::problem::Problem;
use crate::tableaux::{ros_transform, RoswTableau, RoswTransformed};

use super::{recover, StepAttempt, StepStages, Stepper};

/// Steps a cached factorization may serve before a refresh is forced.
pub const JACOBIAN_REUSE_LIMIT: usize = 25;

struct StepMatrices {
    /// Factorization per stage row (implicit rows only).
    lus: Vec<Option<Arc<LuFactors>>>,
    /// Right-hand-side Jacobian, built only when a row needs it explicitly.
    j_rhs: Option<DenseMatrix>,
    dt: f64,
    age: usize,
}

pub struct RoswStepper {
    tab: Arc<RoswTableau>,
    tr: RoswTransformed,
    reuse: bool,
    cache: Option<StepMatrices>,
}

impl RoswStepper {
    pub fn new(tab: Arc<RoswTableau>, reuse_jacobian: bool) -> Result<Self> {
        let tr = ros_transform(&tab)?;
        if reuse_jacobian && !tab.w_method {
            return Err(Error::Config(format!(
                "{} is not a W-method; reusing a stale Jacobian would drop its order",
                tab.name
            )));
        }
        Ok(RoswStepper {
            tab,
            tr,
            reuse: reuse_jacobian,
            cache: None,
        })
    }

    /// Assemble (or reuse) the per-row factorizations at the step start.
    fn matrices(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<Option<()>> {
        if let Some(c) = &self.cache {
            if self.reuse && c.dt == dt && c.age < JACOBIAN_REUSE_LIMIT {
                return Ok(Some(()));
            }
        }
        self.cache = None;

        let s = self.tr.stages;
        let zeros = vec![0.0; u.len()];
        let mut lus: Vec<Option<Arc<LuFactors>>> = vec![None; s];
        let mut by_gamma: Vec<(f64, Arc<LuFactors>)> = Vec::new();
        let mut j_rhs = None;

        for i in 0..s {
            if self.tr.explicit_row[i] {
                if j_rhs.is_none() {
                    let mut j = match recover(p.implicit_jacobian(t, u, &zeros, 0.0, true))? {
                        Some(j) => j,
                        None => return Ok(None),
                    };
                    j.scale(-1.0);
                    j_rhs = Some(j);
                }
                continue;
            }
            let g = self.tr.gamma_diag[i];
            if let Some((_, lu)) = by_gamma.iter().find(|(gj, _)| *gj == g) {
                lus[i] = Some(lu.clone());
                continue;
            }
            let shift = 1.0 / (dt * g);
            let m = match recover(p.implicit_jacobian(t, u, &zeros, shift, true))? {
                Some(m) => m,
                None => return Ok(None),
            };
            let lu = match linalg::lu_factor(m) {
                Ok(lu) => Arc::new(lu),
                Err(Error::SingularMatrix { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            by_gamma.push((g, lu.clone()));
            lus[i] = Some(lu);
        }

        self.cache = Some(StepMatrices {
            lus,
            j_rhs,
            dt,
            age: 0,
        });
        Ok(Some(()))
    }
}

impl Stepper for RoswStepper {
    fn name(&self) -> String {
        format!("rosw:{}", self.tab.name)
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
        self.tr.m_embedded.is_some()
    }

    fn attempt(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt> {
        let s = self.tr.stages;
        let n = u.len();
        let mut linear_iters = 0u64;

        if self.matrices(p, t, u, dt)?.is_none() {
            return Ok(StepAttempt::failed(0, 0));
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let ti = t + self.tr.c[i] * dt;
            let mut x = u.to_vec();
            for (j, vj) in v.iter().enumerate() {
                let w = self.tr.omega.get(i, j);
                if w != 0.0 {
                    for (xi, vi) in x.iter_mut().zip(vj) {
                        *xi += w * vi;
                    }
                }
            }
            // s_i = sum_j d_ij v_j (strictly lower, so only known stages).
            let mut si = vec![0.0; n];
            for (j, vj) in v.iter().enumerate() {
                let w = self.tr.d.get(i, j);
                if w != 0.0 {
                    for (a, b) in si.iter_mut().zip(vj) {
                        *a += w * b;
                    }
                }
            }

            let cache = self.cache.as_ref().unwrap();
            let vi = if self.tr.explicit_row[i] {
                let f = match recover(p.implicit_residual(ti, &x, &vec![0.0; n], true))? {
                    Some(mut f) => {
                        for fi in f.iter_mut() {
                            *fi = -*fi;
                        }
                        f
                    }
                    None => return Ok(StepAttempt::failed(0, linear_iters)),
                };
                let gh = self.tr.gamma_diag[i];
                let js = cache.j_rhs.as_ref().unwrap().matvec(&si);
                let inner: Vec<f64> =
                    f.iter().zip(&js).map(|(&fi, &ji)| fi + gh * ji).collect();
                let minv = match recover(p.mass_solve(&inner))? {
                    Some(v) => v,
                    None => return Ok(StepAttempt::failed(0, linear_iters)),
                };
                si.iter()
                    .zip(&minv)
                    .map(|(&sv, &mv)| gh * (sv + dt * mv))
                    .collect()
            } else {
                let zdot: Vec<f64> = si.iter().map(|&a| -a / dt).collect();
                let rhs = match recover(p.implicit_residual(ti, &x, &zdot, true))? {
                    Some(mut r) => {
                        for ri in r.iter_mut() {
                            *ri = -*ri;
                        }
                        r
                    }
                    None => return Ok(StepAttempt::failed(0, linear_iters)),
                };
                linear_iters += 1;
                linalg::lu_solve(cache.lus[i].as_ref().unwrap(), &rhs)
            };
            if vi.iter().any(|x| !x.is_finite()) {
                return Ok(StepAttempt::failed(0, linear_iters));
            }
            v.push(vi);
        }

        let mut u_new = u.to_vec();
        for (j, vj) in v.iter().enumerate() {
            let w = self.tr.m[j];
            if w != 0.0 {
                for (ui, vi) in u_new.iter_mut().zip(vj) {
                    *ui += w * vi;
                }
            }
        }

        let (err, u_alt) = match &self.tr.m_embedded {
            Some(me) => {
                let mut e = vec![0.0; n];
                for (j, vj) in v.iter().enumerate() {
                    let w = self.tr.m[j] - me[j];
                    if w != 0.0 {
                        for (ei, vi) in e.iter_mut().zip(vj) {
                            *ei += w * vi;
                        }
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
            stages: StepStages::default(),
            newton_iters: 0,
            linear_iters,
            converged: true,
        })
    }

    fn commit(&mut self, _t: f64, _dt: f64, _u_old: &[f64], _u_new: &[f64], _stages: &StepStages) {
        if let Some(c) = &mut self.cache {
            c.age += 1;
        }
    }

    fn discontinuity(&mut self) {
        self.cache = None;
    }
}
