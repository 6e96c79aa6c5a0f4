//! Problem definition in implicit form.
//!
//! Every problem is carried as a residual `F(t, u, udot)` with an optional
//! explicit part `G(t, u)`, the contract being that the dynamics satisfy
//! `F(t, u, udot) = G(t, u)`. A plain ODE `udot = g(t, u)` fits with
//! `F := udot` and `G := g`; a stiff implicit ODE uses `F := udot - h(t, u)`
//! with no `G`; a DAE supplies `F` directly. [`make_problem`] wires the common
//! setups so steppers never special-case them: an implicit stepper only ever
//! sees `F`, `G`, and the shifted Jacobian `sigma*dF/dudot + dF/du`.
//!
//! Mass matrices are constant and pre-factored at setup. Forms that need
//! `M^-1` (a nonstiff right-hand side under a mass matrix) absorb the solve
//! into the stored callback, so downstream code sees an ordinary `G`.

use std::cell::Cell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, FdParams, LuFactors};
use crate::matrix::DenseMatrix;

/// Residual callback `F(t, u, udot)`.
pub type IFunctionFn = dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync;
/// Explicit right-hand side callback `G(t, u)` (or a raw `g`/`h` part).
pub type RhsFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;
/// Shifted Jacobian callback: returns `sigma*dF/dudot + dF/du`.
pub type IJacobianFn = dyn Fn(f64, &[f64], &[f64], f64) -> DenseMatrix + Send + Sync;
/// Jacobian of an explicit right-hand side.
pub type RhsJacobianFn = dyn Fn(f64, &[f64]) -> DenseMatrix + Send + Sync;
/// Residual sensitivity `dF/dp`, shape `n x nparams`.
pub type ParamJacobianFn = dyn Fn(f64, &[f64]) -> DenseMatrix + Send + Sync;

/// What the time derivative structure of `F` is known to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquationKind {
    /// `udot = G(t, u)`; no stiff residual at all.
    ExplicitOde,
    /// `F` is linear in `udot` with an invertible (often identity) mass.
    ImplicitOde,
    /// Fully implicit; `dF/dudot` may be singular.
    ImplicitDae,
}

/// Constant mass structure attached to a problem.
enum Mass {
    /// `dF/dudot = I`; solves and products are identity (bitwise).
    Identity,
    /// Explicit constant matrix, pre-factored at setup.
    Matrix {
        m: DenseMatrix,
        lu: Arc<LuFactors>,
    },
    /// Not declared; operations that need `M` explicitly are refused.
    Undeclared,
}

/// Running totals of callback invocations, including those made by the
/// finite-difference fallbacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub rhs: u64,
    pub residual: u64,
    pub jacobian: u64,
}

/// A problem in implicit form plus whatever structure the user declared.
///
/// Evaluation counters live inside the problem (interior mutability), so each
/// concurrent solve wants its own `Problem` instance; all other solver state
/// lives in the drivers.
pub struct Problem {
    dim: usize,
    nparams: usize,
    ifunction: Option<Box<IFunctionFn>>,
    rhsfunction: Option<Box<RhsFn>>,
    ijacobian: Option<Box<IJacobianFn>>,
    rhsjacobian: Option<Box<RhsJacobianFn>>,
    param_jacobian: Option<Box<ParamJacobianFn>>,
    kind: EquationKind,
    mass: Mass,
    counts: Cell<EvalCounts>,
}

impl Problem {
    /// Start a problem of dimension `dim`.
    ///
    /// A bare problem has no callbacks; attach at least a residual or a
    /// right-hand side before handing it to a stepper. A problem built with
    /// only `with_rhs` is an explicit ODE with implicit `F := udot` and an
    /// identity mass. A problem built with a raw `with_ifunction` defaults to
    /// DAE kind and an undeclared mass; declare the mass when it is known,
    /// since interpolation and explicit stages need it.
    pub fn new(dim: usize) -> Self {
        Problem {
            dim,
            nparams: 0,
            ifunction: None,
            rhsfunction: None,
            ijacobian: None,
            rhsjacobian: None,
            param_jacobian: None,
            kind: EquationKind::ExplicitOde,
            mass: Mass::Identity,
            counts: Cell::new(EvalCounts::default()),
        }
    }

    pub fn eval_counts(&self) -> EvalCounts {
        self.counts.get()
    }

    /// Invocations since an earlier [`eval_counts`](Self::eval_counts)
    /// snapshot; lets a driver report per-run work on a reused problem.
    pub fn eval_counts_since(&self, start: EvalCounts) -> EvalCounts {
        let now = self.counts.get();
        EvalCounts {
            rhs: now.rhs - start.rhs,
            residual: now.residual - start.residual,
            jacobian: now.jacobian - start.jacobian,
        }
    }

    pub fn reset_eval_counts(&self) {
        self.counts.set(EvalCounts::default());
    }

    fn bump(&self, f: impl FnOnce(&mut EvalCounts)) {
        let mut c = self.counts.get();
        f(&mut c);
        self.counts.set(c);
    }

    pub fn with_ifunction<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.ifunction = Some(Box::new(f));
        // A raw residual could be anything; be honest until told otherwise.
        self.kind = EquationKind::ImplicitDae;
        self.mass = Mass::Undeclared;
        self
    }

    pub fn with_ijacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], f64) -> DenseMatrix + Send + Sync + 'static,
    {
        self.ijacobian = Some(Box::new(f));
        self
    }

    pub fn with_rhs<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.rhsfunction = Some(Box::new(f));
        self
    }

    pub fn with_rhsjacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> DenseMatrix + Send + Sync + 'static,
    {
        self.rhsjacobian = Some(Box::new(f));
        self
    }

    /// Declare parameters and the residual sensitivity `dF/dp`.
    pub fn with_params<F>(mut self, nparams: usize, jac: F) -> Self
    where
        F: Fn(f64, &[f64]) -> DenseMatrix + Send + Sync + 'static,
    {
        self.nparams = nparams;
        self.param_jacobian = Some(Box::new(jac));
        self
    }

    /// Declare that `dF/dudot` is the identity.
    pub fn with_identity_mass(mut self) -> Self {
        self.mass = Mass::Identity;
        if self.kind == EquationKind::ImplicitDae {
            self.kind = EquationKind::ImplicitOde;
        }
        self
    }

    /// Declare a constant mass matrix; it is factored here, once.
    pub fn with_mass(mut self, m: DenseMatrix) -> Result<Self> {
        if m.rows() != self.dim || m.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "mass matrix",
                expected: self.dim,
                got: m.rows(),
            });
        }
        let lu = Arc::new(linalg::lu_factor(m.clone())?);
        self.mass = Mass::Matrix { m, lu };
        if self.kind == EquationKind::ImplicitDae {
            self.kind = EquationKind::ImplicitOde;
        }
        Ok(self)
    }

    pub fn with_equation_kind(mut self, kind: EquationKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nparams(&self) -> usize {
        self.nparams
    }

    pub fn equation_kind(&self) -> EquationKind {
        self.kind
    }

    pub fn has_ifunction(&self) -> bool {
        self.ifunction.is_some()
    }

    pub fn has_rhs(&self) -> bool {
        self.rhsfunction.is_some()
    }

    pub fn has_analytic_ijacobian(&self) -> bool {
        self.ijacobian.is_some()
    }

    /// True when `dF/dudot` is known to be the identity.
    pub fn has_identity_mass(&self) -> bool {
        matches!(self.mass, Mass::Identity)
    }

    /// `M v` when the mass is declared.
    pub fn mass_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.mass {
            Mass::Identity => Ok(v.to_vec()),
            Mass::Matrix { m, .. } => Ok(m.matvec(v)),
            Mass::Undeclared => Err(Error::MissingCallback("a declared mass matrix")),
        }
    }

    /// `M^-1 v` when the mass is declared.
    pub fn mass_solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.mass {
            Mass::Identity => Ok(v.to_vec()),
            Mass::Matrix { lu, .. } => Ok(linalg::lu_solve(lu, v)),
            Mass::Undeclared => Err(Error::MissingCallback("a declared mass matrix")),
        }
    }

    /// `M^T v`; the transposed sweeps need the adjoint of the mass action.
    pub fn mass_apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.mass {
            Mass::Identity => Ok(v.to_vec()),
            Mass::Matrix { m, .. } => Ok(m.matvec_transpose(v)),
            Mass::Undeclared => Err(Error::MissingCallback("a declared mass matrix")),
        }
    }

    /// `M^-T v` when the mass is declared.
    pub fn mass_solve_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.mass {
            Mass::Identity => Ok(v.to_vec()),
            Mass::Matrix { lu, .. } => Ok(linalg::lu_solve_transpose(lu, v)),
            Mass::Undeclared => Err(Error::MissingCallback("a declared mass matrix")),
        }
    }

    /// The declared mass matrix as a dense matrix.
    pub fn mass_dense(&self) -> Result<DenseMatrix> {
        match &self.mass {
            Mass::Identity => Ok(DenseMatrix::identity(self.dim)),
            Mass::Matrix { m, .. } => Ok(m.clone()),
            Mass::Undeclared => Err(Error::MissingCallback("a declared mass matrix")),
        }
    }

    fn check_state(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
        for (i, x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite { what, index: i });
            }
        }
        Ok(())
    }

    /// Evaluate the residual `F(t, u, udot)`.
    ///
    /// Defaults to `udot` when only a right-hand side was registered; the
    /// explicit part is handled separately by the partitioned steppers.
    pub fn eval_ifunction(&self, t: f64, u: &[f64], udot: &[f64]) -> Result<Vec<f64>> {
        self.check_state("state u", u)?;
        self.check_state("state udot", udot)?;
        self.bump(|c| c.residual += 1);
        let r = match &self.ifunction {
            Some(f) => f(t, u, udot),
            None => udot.to_vec(),
        };
        self.check_state("residual", &r)?;
        Self::check_finite("residual", &r)?;
        Ok(r)
    }

    /// Evaluate the explicit part `G(t, u)`.
    pub fn eval_rhs(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.check_state("state u", u)?;
        let f = self
            .rhsfunction
            .as_ref()
            .ok_or(Error::MissingCallback("rhsfunction"))?;
        self.bump(|c| c.rhs += 1);
        let g = f(t, u);
        self.check_state("rhs", &g)?;
        Self::check_finite("rhs", &g)?;
        Ok(g)
    }

    /// Shifted Jacobian `sigma*dF/dudot + dF/du`, finite-differenced when no
    /// callback was registered.
    ///
    /// The fallback differences `x -> F(t, x, udot + sigma*(x - u))`, which
    /// reproduces the shifted combination in one pass.
    pub fn eval_ijacobian(
        &self,
        t: f64,
        u: &[f64],
        udot: &[f64],
        shift: f64,
    ) -> Result<DenseMatrix> {
        self.check_state("state u", u)?;
        self.check_state("state udot", udot)?;
        self.bump(|c| c.jacobian += 1);
        if let Some(jac) = &self.ijacobian {
            let j = jac(t, u, udot, shift);
            if j.rows() != self.dim || j.cols() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "ijacobian",
                    expected: self.dim,
                    got: j.rows(),
                });
            }
            return Ok(j);
        }
        if self.ifunction.is_none() {
            // F := udot, so the shifted Jacobian is exactly sigma*I.
            let mut j = DenseMatrix::zeros(self.dim, self.dim);
            for i in 0..self.dim {
                j.set(i, i, shift);
            }
            return Ok(j);
        }
        let u0 = u.to_vec();
        let udot0 = udot.to_vec();
        let f = self.ifunction.as_ref().unwrap();
        let composite = |tt: f64, x: &[f64]| -> Vec<f64> {
            self.bump(|c| c.residual += 1);
            let mut xdot = udot0.clone();
            for i in 0..xdot.len() {
                xdot[i] += shift * (x[i] - u0[i]);
            }
            f(tt, x, &xdot)
        };
        Ok(linalg::fd_jacobian(composite, t, u, FdParams::for_state(u)))
    }

    /// Jacobian of the explicit part, finite-differenced when absent.
    pub fn eval_rhsjacobian(&self, t: f64, u: &[f64]) -> Result<DenseMatrix> {
        self.check_state("state u", u)?;
        if self.rhsfunction.is_none() {
            return Err(Error::MissingCallback("rhsfunction"));
        }
        self.bump(|c| c.jacobian += 1);
        if let Some(jac) = &self.rhsjacobian {
            let j = jac(t, u);
            if j.rows() != self.dim || j.cols() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "rhsjacobian",
                    expected: self.dim,
                    got: j.rows(),
                });
            }
            return Ok(j);
        }
        let f = self.rhsfunction.as_ref().unwrap();
        Ok(linalg::fd_jacobian(
            |tt, x| {
                self.bump(|c| c.rhs += 1);
                f(tt, x)
            },
            t,
            u,
            FdParams::for_state(u),
        ))
    }

    /// Residual sensitivity `dF/dp`.
    pub fn eval_param_jacobian(&self, t: f64, u: &[f64]) -> Result<DenseMatrix> {
        self.check_state("state u", u)?;
        let jac = self
            .param_jacobian
            .as_ref()
            .ok_or(Error::MissingCallback("param_jacobian"))?;
        let j = jac(t, u);
        if j.rows() != self.dim || j.cols() != self.nparams {
            return Err(Error::DimensionMismatch {
                what: "param_jacobian",
                expected: self.dim * self.nparams.max(1),
                got: j.rows() * j.cols(),
            });
        }
        Ok(j)
    }

    /// Total right-hand side of `M udot = ...`: `G(t, u) - F(t, u, 0)`.
    ///
    /// For the forms built by [`make_problem`] this is `g + h` exactly; for a
    /// raw DAE it is only meaningful if `F` is linear in `udot`.
    pub fn total_rhs(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = match &self.rhsfunction {
            Some(_) => self.eval_rhs(t, u)?,
            None => vec![0.0; self.dim],
        };
        if self.ifunction.is_some() {
            let zero = vec![0.0; self.dim];
            let f0 = self.eval_ifunction(t, u, &zero)?;
            for (o, f) in out.iter_mut().zip(&f0) {
                *o -= f;
            }
        }
        Ok(out)
    }

    /// Jacobian of [`Problem::total_rhs`].
    pub fn total_rhs_jacobian(&self, t: f64, u: &[f64]) -> Result<DenseMatrix> {
        let mut j = if self.rhsfunction.is_some() {
            self.eval_rhsjacobian(t, u)?
        } else {
            DenseMatrix::zeros(self.dim, self.dim)
        };
        if self.ifunction.is_some() {
            let zero = vec![0.0; self.dim];
            let fu = self.eval_ijacobian(t, u, &zero, 0.0)?;
            j.add_scaled(-1.0, &fu);
        }
        Ok(j)
    }

    /// Time derivative consistent with the state: `M^-1 (G - F(t,u,0))`.
    pub fn udot_from_state(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.total_rhs(t, u)?;
        self.mass_solve(&rhs)
    }

    /// `F - G` (or just `F`): the residual a fully implicit solve drives to
    /// zero.
    pub fn implicit_residual(
        &self,
        t: f64,
        u: &[f64],
        udot: &[f64],
        include_rhs: bool,
    ) -> Result<Vec<f64>> {
        let mut r = self.eval_ifunction(t, u, udot)?;
        if include_rhs && self.rhsfunction.is_some() {
            let g = self.eval_rhs(t, u)?;
            for (ri, gi) in r.iter_mut().zip(&g) {
                *ri -= gi;
            }
        }
        Ok(r)
    }

    /// Jacobian matching [`Problem::implicit_residual`]:
    /// `sigma*dF/dudot + dF/du - dG/du` (the last term only when included).
    pub fn implicit_jacobian(
        &self,
        t: f64,
        u: &[f64],
        udot: &[f64],
        shift: f64,
        include_rhs: bool,
    ) -> Result<DenseMatrix> {
        let mut j = self.eval_ijacobian(t, u, udot, shift)?;
        if include_rhs && self.rhsfunction.is_some() {
            let g = self.eval_rhsjacobian(t, u)?;
            j.add_scaled(-1.0, &g);
        }
        Ok(j)
    }
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.dim)
            .field("nparams", &self.nparams)
            .field("kind", &self.kind)
            .field("ifunction", &self.ifunction.is_some())
            .field("rhsfunction", &self.rhsfunction.is_some())
            .finish()
    }
}

/// How the user states their dynamics; see the table on [`make_problem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `udot = g(t, u)`
    NonstiffOde,
    /// `udot = h(t, u)`, solved implicitly
    StiffOde,
    /// `M udot = h(t, u)`
    StiffOdeWithMass,
    /// `M udot = g(t, u)`, `M` constant and nonsingular
    NonstiffOdeWithMass,
    /// `udot = g(t, u) + h(t, u)`, `h` stiff
    SplitOde,
    /// `M udot = g(t, u) + h(t, u)`
    SplitOdeWithMass,
    /// `h(t, u, udot) = 0`
    FullyImplicit,
}

/// Callback bundle for [`make_problem`]; fill in the parts the form needs.
#[derive(Default)]
pub struct FormCallbacks {
    /// Nonstiff right-hand side `g(t, u)`.
    pub g: Option<Box<RhsFn>>,
    pub g_jac: Option<Box<RhsJacobianFn>>,
    /// Stiff right-hand side `h(t, u)`.
    pub h: Option<Box<RhsFn>>,
    pub h_jac: Option<Box<RhsJacobianFn>>,
    /// Fully implicit residual `h(t, u, udot)`.
    pub implicit: Option<Box<IFunctionFn>>,
    pub implicit_jac: Option<Box<IJacobianFn>>,
}

/// Build a [`Problem`] from one of the standard forms.
///
/// | form                  | residual `F`        | explicit part `G` |
/// |-----------------------|---------------------|-------------------|
/// | `NonstiffOde`         | `udot`              | `g`               |
/// | `StiffOde`            | `udot - h`          | none              |
/// | `StiffOdeWithMass`    | `M udot - h`        | none              |
/// | `NonstiffOdeWithMass` | `udot`              | `M^-1 g`          |
/// | `SplitOde`            | `udot - h`          | `g`               |
/// | `SplitOdeWithMass`    | `M udot - h`        | `M^-1 g`          |
/// | `FullyImplicit`       | `h(t, u, udot)`     | none              |
///
/// `M` is factored once here; a singular mass matrix is an error for the
/// forms that invert it and for the stiff forms, which treat it as the
/// leading coefficient of the stage matrices.
pub fn make_problem(
    dim: usize,
    form: FormKind,
    cb: FormCallbacks,
    mass: Option<DenseMatrix>,
) -> Result<Problem> {
    let need = |have: bool, what: &'static str| -> Result<()> {
        if have {
            Ok(())
        } else {
            Err(Error::Config(format!("form requires {what}")))
        }
    };
    match form {
        FormKind::NonstiffOde => {
            need(cb.g.is_some(), "a nonstiff right-hand side g")?;
            if mass.is_some() {
                return Err(Error::Config(
                    "nonstiff form without mass given a mass matrix; use NonstiffOdeWithMass"
                        .into(),
                ));
            }
            let mut p = Problem::new(dim);
            let g = cb.g.unwrap();
            p = p.with_rhs(move |t, u| g(t, u));
            if let Some(gj) = cb.g_jac {
                p = p.with_rhsjacobian(move |t, u| gj(t, u));
            }
            Ok(p.with_equation_kind(EquationKind::ExplicitOde))
        }
        FormKind::StiffOde | FormKind::SplitOde => {
            need(cb.h.is_some(), "a stiff right-hand side h")?;
            if form == FormKind::SplitOde {
                need(cb.g.is_some(), "a nonstiff right-hand side g")?;
            }
            let h = cb.h.unwrap();
            let mut p = Problem::new(dim).with_ifunction(move |t, u, udot| {
                let hv = h(t, u);
                udot.iter().zip(&hv).map(|(ud, hi)| ud - hi).collect()
            });
            if let Some(hj) = cb.h_jac {
                p = p.with_ijacobian(move |t, u, _udot, shift| {
                    let mut j = hj(t, u);
                    j.scale(-1.0);
                    for i in 0..j.rows() {
                        j.add_to(i, i, shift);
                    }
                    j
                });
            }
            if let Some(g) = cb.g {
                p = p.with_rhs(move |t, u| g(t, u));
                if let Some(gj) = cb.g_jac {
                    p = p.with_rhsjacobian(move |t, u| gj(t, u));
                }
            }
            Ok(p.with_identity_mass()
                .with_equation_kind(EquationKind::ImplicitOde))
        }
        FormKind::StiffOdeWithMass | FormKind::SplitOdeWithMass => {
            need(cb.h.is_some(), "a stiff right-hand side h")?;
            let m = mass.ok_or_else(|| Error::Config("form requires a mass matrix".into()))?;
            if form == FormKind::SplitOdeWithMass {
                need(cb.g.is_some(), "a nonstiff right-hand side g")?;
            }
            let h = cb.h.unwrap();
            let m_res = m.clone();
            let mut p = Problem::new(dim).with_ifunction(move |t, u, udot| {
                let hv = h(t, u);
                let mud = m_res.matvec(udot);
                mud.iter().zip(&hv).map(|(a, b)| a - b).collect()
            });
            if let Some(hj) = cb.h_jac {
                let m_jac = m.clone();
                p = p.with_ijacobian(move |t, u, _udot, shift| {
                    let hu = hj(t, u);
                    let mut j = DenseMatrix::zeros(hu.rows(), hu.cols());
                    for i in 0..j.rows() {
                        for k in 0..j.cols() {
                            j.set(i, k, shift * m_jac.get(i, k) - hu.get(i, k));
                        }
                    }
                    j
                });
            }
            let p = p.with_mass(m)?;
            let mut p = p.with_equation_kind(EquationKind::ImplicitOde);
            if form == FormKind::SplitOdeWithMass {
                // G := M^-1 g, reusing the factorization held by the problem.
                let lu = match &p.mass {
                    Mass::Matrix { lu, .. } => Arc::clone(lu),
                    _ => unreachable!("mass was just attached"),
                };
                let g = cb.g.unwrap();
                let lu_rhs = Arc::clone(&lu);
                p = p.with_rhs(move |t, u| linalg::lu_solve(&lu_rhs, &g(t, u)));
                if let Some(gj) = cb.g_jac {
                    p = p.with_rhsjacobian(move |t, u| {
                        solve_columns(&lu, &gj(t, u))
                    });
                }
            }
            Ok(p)
        }
        FormKind::NonstiffOdeWithMass => {
            need(cb.g.is_some(), "a nonstiff right-hand side g")?;
            let m = mass.ok_or_else(|| Error::Config("form requires a mass matrix".into()))?;
            let lu = Arc::new(linalg::lu_factor(m)?);
            let g = cb.g.unwrap();
            let lu_rhs = Arc::clone(&lu);
            let mut p = Problem::new(dim)
                .with_rhs(move |t, u| linalg::lu_solve(&lu_rhs, &g(t, u)));
            if let Some(gj) = cb.g_jac {
                p = p.with_rhsjacobian(move |t, u| solve_columns(&lu, &gj(t, u)));
            }
            Ok(p.with_equation_kind(EquationKind::ExplicitOde))
        }
        FormKind::FullyImplicit => {
            need(cb.implicit.is_some(), "an implicit residual h(t, u, udot)")?;
            let f = cb.implicit.unwrap();
            let mut p = Problem::new(dim).with_ifunction(move |t, u, udot| f(t, u, udot));
            if let Some(fj) = cb.implicit_jac {
                p = p.with_ijacobian(move |t, u, udot, shift| fj(t, u, udot, shift));
            }
            Ok(p.with_equation_kind(EquationKind::ImplicitDae))
        }
    }
}

/// `M^-1 J` column by column.
fn solve_columns(lu: &LuFactors, j: &DenseMatrix) -> DenseMatrix {
    let n = j.rows();
    let mut out = DenseMatrix::zeros(n, j.cols());
    let mut col = vec![0.0; n];
    for c in 0..j.cols() {
        for r in 0..n {
            col[r] = j.get(r, c);
        }
        let x = linalg::lu_solve(lu, &col);
        for r in 0..n {
            out.set(r, c, x[r]);
        }
    }
    out
}
