//! Tangent-linear propagation: the same step maps as the forward solve,
//! differentiated and applied to a block of seed directions.
//!
//! The sensitivity matrix `S` starts at `du0/d(seed)` and after each step
//! holds `du_k/d(seed)` for the discrete solution, so a directional finite
//! difference of the solve itself converges to `S w`, and the adjoint sweep
//! over the same trajectory is its exact transpose.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::problem::Problem;
use crate::steppers::StepperConfig;
use crate::tableaux::registry::Scheme;

use super::adjoint::check_run;
use super::trajectory::{Replayer, Trajectory};
use super::{require_sweep_family, CostIntegrand};

/// What the seed columns differentiate against. Parameter seeding adds the
/// explicit `df/dp` forcing at every stage; initial-condition seeding
/// propagates the homogeneous tangent only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    InitialConditions,
    Parameters,
}

/// Result of a tangent sweep over `m` seed directions.
#[derive(Debug, Clone)]
pub struct ForwardSensitivity {
    /// `du_N/d(seed)`, n x m.
    pub s: DenseMatrix,
    /// Derivative of each cost integral with respect to the seeds,
    /// ncost x m (zero rows without an integrand).
    pub quadrature_sensitivity: DenseMatrix,
    /// The cost integrals themselves, for convenience (empty without an
    /// integrand).
    pub cost_integral: Vec<f64>,
}

fn col(m: &DenseMatrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

fn set_col(m: &mut DenseMatrix, c: usize, v: &[f64]) {
    for (r, x) in v.iter().enumerate() {
        m.set(r, c, *x);
    }
}

/// Propagate `s0` (n x m) through the recorded run.
///
/// With `SeedKind::Parameters` the seed must have one column per problem
/// parameter (`s0 = du0/dp`, usually zero) and the problem must declare a
/// parameter Jacobian. The trajectory must come from the same problem,
/// scheme, and configuration.
pub fn forward_solve(
    problem: &Problem,
    scheme: &Scheme,
    cfg: &StepperConfig,
    traj: &mut Trajectory,
    s0: &DenseMatrix,
    seed: SeedKind,
    integrand: Option<&CostIntegrand>,
) -> Result<ForwardSensitivity> {
    require_sweep_family(scheme)?;
    check_run(traj, problem)?;
    let n = problem.dim();
    let np = problem.nparams();
    if s0.rows() != n {
        return Err(Error::DimensionMismatch {
            what: "seed matrix rows",
            expected: n,
            got: s0.rows(),
        });
    }
    let m = s0.cols();
    if m == 0 {
        return Err(Error::Config("seed matrix has no columns".into()));
    }
    let with_params = match seed {
        SeedKind::InitialConditions => false,
        SeedKind::Parameters => {
            if np == 0 {
                return Err(Error::Config(
                    "parameter seeding needs a problem with declared \
                     parameters (with_params)"
                        .into(),
                ));
            }
            if m != np {
                return Err(Error::DimensionMismatch {
                    what: "parameter seed columns",
                    expected: np,
                    got: m,
                });
            }
            true
        }
    };
    if let Some(ig) = integrand {
        ig.check_dims(n, np)?;
    }
    let ncost = integrand.map_or(0, |ig| ig.ncost);
    let replayer = Replayer::new(problem, scheme, cfg);
    let mut smat = s0.clone();
    let mut quad = DenseMatrix::zeros(ncost, m);
    let mut cost = vec![0.0; ncost];
    let nsteps = traj.final_index();

    // Adds one quadrature point: `weight * (drdu X + drdp E)` per cost row,
    // where `X` is the tangent of the state at that point.
    let add_quad = |quad: &mut DenseMatrix,
                        cost: &mut [f64],
                        t: f64,
                        u: &[f64],
                        x: &DenseMatrix,
                        weight: f64|
     -> Result<()> {
        let ig = match integrand {
            Some(ig) => ig,
            None => return Ok(()),
        };
        let r = ig.eval_r(t, u)?;
        let drdu = ig.eval_drdu(t, u, n)?;
        let drdp = ig.eval_drdp(t, u, np)?;
        for j in 0..ncost {
            cost[j] += weight * r[j];
            for c in 0..m {
                let mut acc = 0.0;
                for rr in 0..n {
                    acc += drdu.get(j, rr) * x.get(rr, c);
                }
                if with_params {
                    acc += drdp.get(j, c);
                }
                quad.add_to(j, c, weight * acc);
            }
        }
        Ok(())
    };

    match scheme {
        Scheme::Erk(tab) => {
            let s = tab.stages();
            for k in 1..=nsteps {
                let meta = traj.meta()[k as usize - 1];
                let h = meta.dt;
                let (t0, _, _) = traj.get(k - 1, &replayer)?;
                let stages = traj.stages_for_step(k, &replayer)?;
                if stages.len() != s {
                    return Err(Error::Config(
                        "trajectory stage data does not match the tableau".into(),
                    ));
                }
                let mut ks: Vec<DenseMatrix> = Vec::with_capacity(s);
                for (i, ui) in stages.iter().enumerate() {
                    let ti = t0 + tab.c[i] * h;
                    let mut xi = smat.clone();
                    for (j, kj) in ks.iter().enumerate() {
                        let aij = tab.a.get(i, j);
                        if aij != 0.0 {
                            xi.add_scaled(h * aij, kj);
                        }
                    }
                    let fu = problem.total_rhs_jacobian(ti, ui)?;
                    let pj = if with_params {
                        Some(problem.eval_param_jacobian(ti, ui)?)
                    } else {
                        None
                    };
                    let mut ki = DenseMatrix::zeros(n, m);
                    for c in 0..m {
                        let mut rhs = fu.matvec(&col(&xi, c));
                        if let Some(pj) = &pj {
                            // df/dp = -d(F - G)/dp.
                            for (r, x) in rhs.iter_mut().enumerate() {
                                *x -= pj.get(r, c);
                            }
                        }
                        set_col(&mut ki, c, &problem.mass_solve(&rhs)?);
                    }
                    add_quad(&mut quad, &mut cost, ti, ui, &xi, h * tab.b[i])?;
                    ks.push(ki);
                }
                for (i, ki) in ks.iter().enumerate() {
                    smat.add_scaled(h * tab.b[i], ki);
                }
            }
        }
        Scheme::Theta { theta, .. } => {
            let th = *theta;
            let mass = problem.mass_dense()?;
            let (mut t0, mut u0, _) = traj.get(0, &replayer)?;
            for k in 1..=nsteps {
                let h = traj.meta()[k as usize - 1].dt;
                let (t1, u1, _) = traj.get(k, &replayer)?;
                let fu1 = problem.total_rhs_jacobian(t1, &u1)?;
                let fu0 = problem.total_rhs_jacobian(t0, &u0)?;
                let mut j1 = mass.clone();
                j1.add_scaled(-h * th, &fu1);
                let lu = linalg::lu_factor(j1)?;
                let mut lhs0 = mass.clone();
                lhs0.add_scaled(h * (1.0 - th), &fu0);
                let pjs = if with_params {
                    Some((
                        problem.eval_param_jacobian(t1, &u1)?,
                        problem.eval_param_jacobian(t0, &u0)?,
                    ))
                } else {
                    None
                };
                let mut s1 = DenseMatrix::zeros(n, m);
                for c in 0..m {
                    let mut rhs = lhs0.matvec(&col(&smat, c));
                    if let Some((pj1, pj0)) = &pjs {
                        for (r, x) in rhs.iter_mut().enumerate() {
                            *x -= h * (th * pj1.get(r, c) + (1.0 - th) * pj0.get(r, c));
                        }
                    }
                    set_col(&mut s1, c, &linalg::lu_solve(&lu, &rhs));
                }
                add_quad(&mut quad, &mut cost, t0, &u0, &smat, h * (1.0 - th))?;
                add_quad(&mut quad, &mut cost, t1, &u1, &s1, h * th)?;
                smat = s1;
                t0 = t1;
                u0 = u1;
            }
        }
        _ => unreachable!("require_sweep_family admits only erk and theta"),
    }
    Ok(ForwardSensitivity {
        s: smat,
        quadrature_sensitivity: quad,
        cost_integral: cost,
    })
}

/// Chain a scalar function `phi(u_N, seed)` through a tangent sweep:
/// `d(phi)/d(seed) = S^T phi_u + phi_p`, plus the first cost row's
/// quadrature sensitivity when an integrand was attached.
pub fn total_derivative(
    phi_u: &[f64],
    phi_p: &[f64],
    fwd: &ForwardSensitivity,
) -> Result<Vec<f64>> {
    let n = fwd.s.rows();
    let m = fwd.s.cols();
    if phi_u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "state gradient",
            expected: n,
            got: phi_u.len(),
        });
    }
    if phi_p.len() != m {
        return Err(Error::DimensionMismatch {
            what: "seed gradient",
            expected: m,
            got: phi_p.len(),
        });
    }
    let mut g = fwd.s.matvec_transpose(phi_u);
    for (gc, pc) in g.iter_mut().zip(phi_p) {
        *gc += pc;
    }
    if fwd.quadrature_sensitivity.rows() > 0 {
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += fwd.quadrature_sensitivity.get(0, c);
        }
    }
    Ok(g)
}
