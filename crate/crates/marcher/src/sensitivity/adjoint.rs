//! Discrete adjoint sweeps: transposed differentiation of the recorded step
//! ladder, one linear solve chain per cost functional.
//!
//! Each accepted step is a map `u_k = N(u_{k-1}, p)`; the sweep propagates
//! `lambda <- (dN/du)^T lambda` backward and accumulates the parameter
//! gradient `mu`, so after the full sweep `lambda` is the gradient of the
//! cost with respect to the initial state and `mu` with respect to the
//! parameters. Because the transposition acts on the computed map itself,
//! the results match finite differences of the discrete solve down to
//! roundoff, independent of how accurate the time discretization is.
//!
//! The integral part of a cost is discretized with the scheme's own
//! quadrature (stage weights for Runge-Kutta, endpoint blend for theta), so
//! the backward accumulation reproduces the forward sum exactly.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::problem::Problem;
use crate::steppers::StepperConfig;
use crate::tableaux::registry::Scheme;

use super::trajectory::{Replayer, Trajectory};
use super::{require_sweep_family, CostIntegrand};

/// Adjoint variables for `ncost` cost functionals: `lambda[j]` is the
/// gradient with respect to the state (length n), `mu[j]` with respect to
/// the parameters (length np). At the final time these hold the terminal
/// gradients; after the sweep, the gradients at the initial time.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl AdjointState {
    /// Terminal condition for costs with no explicit parameter term at the
    /// final time: `mu` starts at zero.
    pub fn terminal(lambda: Vec<Vec<f64>>, nparams: usize) -> Self {
        let mu = vec![vec![0.0; nparams]; lambda.len()];
        AdjointState { lambda, mu }
    }

    fn validate(&self, n: usize, np: usize) -> Result<()> {
        if self.lambda.is_empty() {
            return Err(Error::Config(
                "adjoint terminal condition carries no cost gradients".into(),
            ));
        }
        for row in &self.lambda {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "adjoint lambda row",
                    expected: n,
                    got: row.len(),
                });
            }
        }
        if self.mu.len() != self.lambda.len() {
            return Err(Error::DimensionMismatch {
                what: "adjoint mu rows",
                expected: self.lambda.len(),
                got: self.mu.len(),
            });
        }
        for row in &self.mu {
            if row.len() != np {
                return Err(Error::DimensionMismatch {
                    what: "adjoint mu row",
                    expected: np,
                    got: row.len(),
                });
            }
        }
        Ok(())
    }
}

pub(super) fn check_run(traj: &Trajectory, problem: &Problem) -> Result<()> {
    if traj.final_index() == 0 && traj.meta().is_empty() && traj.len() == 0 {
        return Err(Error::Config("trajectory has no recorded run".into()));
    }
    if traj.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            what: "trajectory state",
            expected: problem.dim(),
            got: traj.dim(),
        });
    }
    if traj.has_events() {
        return Err(Error::Config(
            "the recorded run crossed event discontinuities, which the \
             adjoint and tangent sweeps do not differentiate"
                .into(),
        ));
    }
    Ok(())
}

/// Per-step stage data shared across all cost rows of one sweep step.
struct ErkStepData {
    h: f64,
    b: Vec<f64>,
    a: DenseMatrix,
    fu: Vec<DenseMatrix>,
    pj: Vec<DenseMatrix>,
    drdu: Vec<DenseMatrix>,
    drdp: Vec<DenseMatrix>,
    r: Vec<Vec<f64>>,
}

fn erk_step_data(
    problem: &Problem,
    tab: &crate::tableaux::ButcherTableau,
    t0: f64,
    h: f64,
    stages: &[Vec<f64>],
    integrand: Option<&CostIntegrand>,
    with_params: bool,
) -> Result<ErkStepData> {
    let s = tab.stages();
    if stages.len() != s {
        return Err(Error::Config(format!(
            "trajectory stage data holds {} states but the tableau has {s} \
             stages; the trajectory was recorded with a different scheme",
            stages.len()
        )));
    }
    let n = problem.dim();
    let np = problem.nparams();
    let mut data = ErkStepData {
        h,
        b: tab.b.clone(),
        a: tab.a.clone(),
        fu: Vec::with_capacity(s),
        pj: Vec::new(),
        drdu: Vec::new(),
        drdp: Vec::new(),
        r: Vec::new(),
    };
    for (i, ui) in stages.iter().enumerate() {
        let ti = t0 + tab.c[i] * h;
        data.fu.push(problem.total_rhs_jacobian(ti, ui)?);
        if with_params {
            data.pj.push(problem.eval_param_jacobian(ti, ui)?);
        }
        if let Some(ig) = integrand {
            data.drdu.push(ig.eval_drdu(ti, ui, n)?);
            data.drdp.push(ig.eval_drdp(ti, ui, np)?);
            data.r.push(ig.eval_r(ti, ui)?);
        }
    }
    Ok(data)
}

/// One backward Runge-Kutta step for cost row `j`: stage sweep from last to
/// first, each stage solving with the transposed mass.
fn erk_adjoint_step(
    problem: &Problem,
    d: &ErkStepData,
    lambda: &mut [f64],
    mu: &mut [f64],
    j: usize,
) -> Result<()> {
    let s = d.b.len();
    let n = lambda.len();
    let np = mu.len();
    let mut big_w: Vec<Vec<f64>> = vec![Vec::new(); s];
    let mut vs: Vec<Vec<f64>> = vec![Vec::new(); s];
    for i in (0..s).rev() {
        let mut w: Vec<f64> = lambda.iter().map(|x| d.b[i] * x).collect();
        for l in i + 1..s {
            let ali = d.a.get(l, i);
            if ali != 0.0 {
                for (wk, wl) in w.iter_mut().zip(&big_w[l]) {
                    *wk += ali * wl;
                }
            }
        }
        let v = problem.mass_solve_transpose(&w)?;
        let mut wi = d.fu[i].matvec_transpose(&v);
        for x in wi.iter_mut() {
            *x *= d.h;
        }
        if !d.drdu.is_empty() {
            for (c, x) in wi.iter_mut().enumerate().take(n) {
                *x += d.h * d.b[i] * d.drdu[i].get(j, c);
            }
        }
        vs[i] = v;
        big_w[i] = wi;
    }
    for wi in &big_w {
        for (lk, wk) in lambda.iter_mut().zip(wi) {
            *lk += wk;
        }
    }
    if np > 0 {
        for i in 0..s {
            let pv = d.pj[i].matvec_transpose(&vs[i]);
            for (mk, pk) in mu.iter_mut().zip(&pv) {
                *mk -= d.h * pk;
            }
            if !d.drdp.is_empty() {
                for (c, mk) in mu.iter_mut().enumerate() {
                    *mk += d.h * d.b[i] * d.drdp[i].get(j, c);
                }
            }
        }
    }
    Ok(())
}

/// Sweep the recorded trajectory backward, returning the gradients at the
/// initial time and the cost integrals (empty without an integrand).
///
/// `terminal` supplies `d(cost_j)/du` at the final state; `integrand` adds
/// an integral term to every cost row (its `ncost` must match). The sweep
/// shares each step's Jacobians and factorization across cost rows, so
/// extra costs price in at one transposed solve per step each.
pub fn adjoint_solve(
    problem: &Problem,
    scheme: &Scheme,
    cfg: &StepperConfig,
    traj: &mut Trajectory,
    terminal: &AdjointState,
    integrand: Option<&CostIntegrand>,
) -> Result<(AdjointState, Vec<f64>)> {
    require_sweep_family(scheme)?;
    check_run(traj, problem)?;
    let n = problem.dim();
    let np = problem.nparams();
    terminal.validate(n, np)?;
    let ncost = terminal.lambda.len();
    if let Some(ig) = integrand {
        ig.check_dims(n, np)?;
        if ig.ncost != ncost {
            return Err(Error::DimensionMismatch {
                what: "cost integrand rows",
                expected: ncost,
                got: ig.ncost,
            });
        }
    }
    let replayer = Replayer::new(problem, scheme, cfg);
    let mut lambda = terminal.lambda.clone();
    let mut mu = terminal.mu.clone();
    let mut cost = vec![0.0; if integrand.is_some() { ncost } else { 0 }];
    let nsteps = traj.final_index();

    match scheme {
        Scheme::Erk(tab) => {
            for k in (1..=nsteps).rev() {
                let m = traj.meta()[k as usize - 1];
                let (t0, _, _) = traj.get(k - 1, &replayer)?;
                let stages = traj.stages_for_step(k, &replayer)?;
                let d = erk_step_data(problem, tab, t0, m.dt, &stages, integrand, np > 0)?;
                for (jr, c) in cost.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..tab.stages() {
                        acc += d.b[i] * d.r[i][jr];
                    }
                    *c += m.dt * acc;
                }
                for j in 0..ncost {
                    erk_adjoint_step(problem, &d, &mut lambda[j], &mut mu[j], j)?;
                }
            }
        }
        Scheme::Theta { theta, .. } => {
            let th = *theta;
            let mass = problem.mass_dense()?;
            let (mut t1, mut u1, _) = traj.get(nsteps, &replayer)?;
            for k in (1..=nsteps).rev() {
                let h = traj.meta()[k as usize - 1].dt;
                let (t0, u0, _) = traj.get(k - 1, &replayer)?;
                let fu1 = problem.total_rhs_jacobian(t1, &u1)?;
                let fu0 = problem.total_rhs_jacobian(t0, &u0)?;
                let mut j1 = mass.clone();
                j1.add_scaled(-h * th, &fu1);
                let lu = linalg::lu_factor(j1)?;
                let (pj1, pj0) = if np > 0 {
                    (
                        problem.eval_param_jacobian(t1, &u1)?,
                        problem.eval_param_jacobian(t0, &u0)?,
                    )
                } else {
                    (DenseMatrix::zeros(0, 0), DenseMatrix::zeros(0, 0))
                };
                let ig_data = match integrand {
                    Some(ig) => Some((
                        ig.eval_r(t1, &u1)?,
                        ig.eval_r(t0, &u0)?,
                        ig.eval_drdu(t1, &u1, n)?,
                        ig.eval_drdu(t0, &u0, n)?,
                        ig.eval_drdp(t1, &u1, np)?,
                        ig.eval_drdp(t0, &u0, np)?,
                    )),
                    None => None,
                };
                if let Some((r1, r0, ..)) = &ig_data {
                    for (jr, c) in cost.iter_mut().enumerate() {
                        *c += h * (th * r1[jr] + (1.0 - th) * r0[jr]);
                    }
                }
                for j in 0..ncost {
                    let mut rhs = lambda[j].clone();
                    if let Some((_, _, dr1, ..)) = &ig_data {
                        for (c, x) in rhs.iter_mut().enumerate() {
                            *x += h * th * dr1.get(j, c);
                        }
                    }
                    let y = linalg::lu_solve_transpose(&lu, &rhs);
                    let mut l0 = mass.matvec_transpose(&y);
                    let fy = fu0.matvec_transpose(&y);
                    for (c, x) in l0.iter_mut().enumerate() {
                        *x += h * (1.0 - th) * fy[c];
                        if let Some((.., dr0, _, _)) = &ig_data {
                            *x += h * (1.0 - th) * dr0.get(j, c);
                        }
                    }
                    lambda[j] = l0;
                    if np > 0 {
                        let p1y = pj1.matvec_transpose(&y);
                        let p0y = pj0.matvec_transpose(&y);
                        for (c, mk) in mu[j].iter_mut().enumerate() {
                            *mk -= h * (th * p1y[c] + (1.0 - th) * p0y[c]);
                            if let Some((.., dp1, dp0)) = &ig_data {
                                *mk += h * (th * dp1.get(j, c) + (1.0 - th) * dp0.get(j, c));
                            }
                        }
                    }
                }
                t1 = t0;
                u1 = u0;
            }
        }
        _ => unreachable!("require_sweep_family admits only erk and theta"),
    }
    Ok((AdjointState { lambda, mu }, cost))
}

/// Forward-order evaluation of the cost integrals over a recorded run, with
/// the same per-step quadrature the adjoint sweep accumulates backward. The
/// two directions sum identical terms, so they agree to roundoff.
pub fn cost_integral(
    problem: &Problem,
    scheme: &Scheme,
    cfg: &StepperConfig,
    traj: &mut Trajectory,
    integrand: &CostIntegrand,
) -> Result<Vec<f64>> {
    require_sweep_family(scheme)?;
    check_run(traj, problem)?;
    integrand.check_dims(problem.dim(), problem.nparams())?;
    let replayer = Replayer::new(problem, scheme, cfg);
    let mut cost = vec![0.0; integrand.ncost];
    let nsteps = traj.final_index();

    match scheme {
        Scheme::Erk(tab) => {
            for k in 1..=nsteps {
                let m = traj.meta()[k as usize - 1];
                let (t0, _, _) = traj.get(k - 1, &replayer)?;
                let stages = traj.stages_for_step(k, &replayer)?;
                if stages.len() != tab.stages() {
                    return Err(Error::Config(
                        "trajectory stage data does not match the tableau".into(),
                    ));
                }
                for (i, ui) in stages.iter().enumerate() {
                    let ti = t0 + tab.c[i] * m.dt;
                    let r = integrand.eval_r(ti, ui)?;
                    for (jr, c) in cost.iter_mut().enumerate() {
                        *c += m.dt * tab.b[i] * r[jr];
                    }
                }
            }
        }
        Scheme::Theta { theta, .. } => {
            let th = *theta;
            let (mut t0, mut u0, _) = traj.get(0, &replayer)?;
            for k in 1..=nsteps {
                let h = traj.meta()[k as usize - 1].dt;
                let (t1, u1, _) = traj.get(k, &replayer)?;
                let r1 = integrand.eval_r(t1, &u1)?;
                let r0 = integrand.eval_r(t0, &u0)?;
                for (jr, c) in cost.iter_mut().enumerate() {
                    *c += h * (th * r1[jr] + (1.0 - th) * r0[jr]);
                }
                t0 = t1;
                u0 = u1;
            }
        }
        _ => unreachable!("require_sweep_family admits only erk and theta"),
    }
    Ok(cost)
}
