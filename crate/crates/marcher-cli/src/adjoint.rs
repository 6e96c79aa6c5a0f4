//! Gradient cross-check: the discrete adjoint against the forward tangent
//! (duality) and against central finite differences of the whole solve.

use clap::Args;
use marcher::options::{FinalTimePolicy, SolveOptions};
use marcher::problems::{instance, ProblemParams};
use marcher::sensitivity::{
    adjoint_solve, forward_solve, record_trajectory, total_derivative, AdjointState,
    CheckpointPolicy, SeedKind,
};
use marcher::steppers::{solve_fixed, StepperConfig, Termination};
use marcher::{parse_scheme, DenseMatrix, Error, Result};

use crate::setup::{parse_params, rel_inf};

pub const DUALITY_TOL: f64 = 1e-8;
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug, Args)]
pub struct AdjointArgs {
    /// Problem with a wired objective: kinetics (psi = u2 at the final
    /// time) or linear-test (psi = u0).
    #[arg(long)]
    pub problem: String,

    /// Differentiated families only: explicit rk or theta.
    #[arg(long)]
    pub scheme: String,

    /// Fixed step size of the differentiated run.
    #[arg(long)]
    pub dt: Option<f64>,

    #[arg(long = "max-time")]
    pub max_time: Option<f64>,

    #[arg(long = "seed-params")]
    pub seed_params: Option<String>,
}

pub struct AdjointReport {
    pub objective: String,
    /// d psi / d u0 three ways.
    pub adjoint_u: Vec<f64>,
    pub forward_u: Vec<f64>,
    pub fd_u: Vec<f64>,
    /// d psi / d parameters three ways; empty when the problem declares none.
    pub adjoint_p: Vec<f64>,
    pub forward_p: Vec<f64>,
    pub fd_p: Vec<f64>,
    pub duality_diff: f64,
    pub fd_diff: f64,
}

impl AdjointReport {
    pub fn passes(&self) -> bool {
        self.duality_diff <= DUALITY_TOL && self.fd_diff <= FD_TOL
    }
}

/// The objective is the tracked component of the final state.
fn objective_component(problem: &str) -> Result<(usize, &'static str)> {
    match problem {
        "kinetics" => Ok((2, "u2 at the final time")),
        "linear-test" => Ok((0, "u0 at the final time")),
        other => Err(Error::Config(format!(
            "adjoint check has objectives wired for kinetics and linear-test, not '{other}'"
        ))),
    }
}

pub fn adjoint_report(
    problem: &str,
    params: ProblemParams,
    scheme_text: &str,
    dt: Option<f64>,
    max_time: Option<f64>,
) -> Result<AdjointReport> {
    let (component, label) = objective_component(problem)?;
    let scheme = parse_scheme(scheme_text)?;
    let inst = instance(problem, params)?;
    let n = inst.u0.len();
    let np = inst.problem.nparams();
    let dt = dt.unwrap_or(inst.default_dt);
    let t_end = max_time.unwrap_or(inst.default_max_time);
    let opts = SolveOptions {
        t0: 0.0,
        dt0: dt,
        max_time: t_end,
        max_steps: usize::MAX,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    };
    let cfg = StepperConfig::default();

    let (res, mut traj) = record_trajectory(
        &inst.problem,
        &scheme,
        &inst.u0,
        &opts,
        None,
        &cfg,
        None,
        CheckpointPolicy::StoreAll,
    )?;
    if res.termination != Termination::ReachedMaxTime {
        return Err(Error::Config(format!(
            "differentiated run ended with {:?} before t = {t_end}",
            res.termination
        )));
    }

    let mut phi_u = vec![0.0; n];
    phi_u[component] = 1.0;

    let terminal = AdjointState::terminal(vec![phi_u.clone()], np);
    let (adj, _) = adjoint_solve(&inst.problem, &scheme, &cfg, &mut traj, &terminal, None)?;
    let adjoint_u = adj.lambda[0].clone();
    let adjoint_p = adj.mu[0].clone();

    let fwd_ic = forward_solve(
        &inst.problem,
        &scheme,
        &cfg,
        &mut traj,
        &DenseMatrix::identity(n),
        SeedKind::InitialConditions,
        None,
    )?;
    let forward_u = total_derivative(&phi_u, &vec![0.0; n], &fwd_ic)?;
    let forward_p = if np > 0 {
        let fwd = forward_solve(
            &inst.problem,
            &scheme,
            &cfg,
            &mut traj,
            &DenseMatrix::zeros(n, np),
            SeedKind::Parameters,
            None,
        )?;
        total_derivative(&phi_u, &vec![0.0; np], &fwd)?
    } else {
        Vec::new()
    };

    // Central differences of the full fixed-step solve.
    let psi_of = |u0: &[f64], params: ProblemParams| -> Result<f64> {
        let inst = instance(problem, params)?;
        let res = solve_fixed(&inst.problem, &scheme, u0, &opts)?;
        Ok(res.u[component])
    };
    let mut fd_u = vec![0.0; n];
    for j in 0..n {
        let eps = 1e-6 * inst.u0[j].abs().max(1.0);
        let mut up = inst.u0.clone();
        let mut dn = inst.u0.clone();
        up[j] += eps;
        dn[j] -= eps;
        fd_u[j] = (psi_of(&up, params)? - psi_of(&dn, params)?) / (2.0 * eps);
    }
    // The only parameterized library problem maps its declared parameter
    // vector to the rate constant k.
    let fd_p = if np > 0 && problem == "kinetics" {
        let eps = 1e-6 * params.k.abs().max(1.0);
        let mut up = params;
        let mut dn = params;
        up.k += eps;
        dn.k -= eps;
        vec![(psi_of(&inst.u0, up)? - psi_of(&inst.u0, dn)?) / (2.0 * eps)]
    } else if np > 0 {
        return Err(Error::Config(format!(
            "no finite-difference seed is wired for the parameters of '{problem}'"
        )));
    } else {
        Vec::new()
    };

    let duality_diff = rel_inf(&adjoint_u, &forward_u).max(rel_inf(&adjoint_p, &forward_p));
    let fd_diff = rel_inf(&adjoint_u, &fd_u).max(rel_inf(&adjoint_p, &fd_p));

    Ok(AdjointReport {
        objective: format!("{label} (t = {t_end})"),
        adjoint_u,
        forward_u,
        fd_u,
        adjoint_p,
        forward_p,
        fd_p,
        duality_diff,
        fd_diff,
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn main(args: &AdjointArgs) -> Result<i32> {
    let params = parse_params(args.seed_params.as_deref())?;
    let report = adjoint_report(
        &args.problem,
        params,
        &args.scheme,
        args.dt,
        args.max_time,
    )?;

    println!("objective: {}", report.objective);
    println!("adjoint  d psi / d u0 = {}", fmt_vec(&report.adjoint_u));
    println!("forward  d psi / d u0 = {}", fmt_vec(&report.forward_u));
    println!("fd       d psi / d u0 = {}", fmt_vec(&report.fd_u));
    if !report.adjoint_p.is_empty() {
        println!("adjoint  d psi / d p  = {}", fmt_vec(&report.adjoint_p));
        println!("forward  d psi / d p  = {}", fmt_vec(&report.forward_p));
        println!("fd       d psi / d p  = {}", fmt_vec(&report.fd_p));
    }
    println!(
        "duality check (adjoint vs forward): {:.3e} (tolerance {DUALITY_TOL:.0e})",
        report.duality_diff
    );
    println!(
        "fd check (adjoint vs central differences): {:.3e} (tolerance {FD_TOL:.0e})",
        report.fd_diff
    );
    if report.passes() {
        Ok(0)
    } else {
        eprintln!("gradient check failed");
        Ok(3)
    }
}
