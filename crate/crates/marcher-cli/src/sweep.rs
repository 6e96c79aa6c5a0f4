//! Work-precision sweep: a (scheme, tolerance) grid solved against a tight
//! self-reference, one CSV row per cell.
//!
//! Cells run concurrently (each builds its own problem instance, so the
//! evaluation counters stay per-cell); the output order is fixed by sorting
//! the scheme keys and walking tolerances loosest to tightest, never by
//! completion order.

use std::fmt::Write as _;
use std::thread;
use std::time::Instant;

use clap::Args;
use marcher::adapt::AdaptConfig;
use marcher::options::{Atol, FinalTimePolicy, SolveOptions, ToleranceSpec};
use marcher::problems::{instance, ProblemParams};
use marcher::steppers::{solve_adaptive, SolveStats, Termination};
use marcher::{parse_scheme, Error, Result};

use crate::setup::{parse_params, rel_inf};

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub problem: String,

    /// Schemes, repeatable or comma separated; duplicates collapse.
    #[arg(long = "scheme", value_delimiter = ',', required = true)]
    pub schemes: Vec<String>,

    /// Tolerance ladder (each run uses rtol = atol = the entry); at least
    /// two values spanning at least two decades.
    #[arg(long = "rtol", value_delimiter = ',', required = true)]
    pub rtols: Vec<f64>,

    #[arg(long)]
    pub dt: Option<f64>,

    #[arg(long = "max-time")]
    pub max_time: Option<f64>,

    #[arg(long = "max-steps", default_value_t = 1_000_000)]
    pub max_steps: usize,

    #[arg(long = "seed-params")]
    pub seed_params: Option<String>,
}

pub struct SweepRow {
    /// Canonical family:name key.
    pub scheme: String,
    pub tolerance: f64,
    pub error: f64,
    pub steps: u64,
    pub rhs_evals: u64,
    pub newton_iters: u64,
    pub wall_time: f64,
}

fn function_evals(st: &SolveStats) -> u64 {
    st.evals.rhs + st.evals.residual
}

pub fn sweep(
    problem: &str,
    params: ProblemParams,
    scheme_texts: &[String],
    rtols: &[f64],
    dt: Option<f64>,
    max_time: Option<f64>,
    max_steps: usize,
) -> Result<Vec<SweepRow>> {
    if rtols.len() < 2 {
        return Err(Error::Config(
            "work-precision sweep needs at least two tolerances".into(),
        ));
    }
    if rtols.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::Config("sweep tolerances must be positive".into()));
    }
    let mut tols = rtols.to_vec();
    tols.sort_by(|a, b| b.total_cmp(a));
    tols.dedup();
    let span = tols.first().unwrap() / tols.last().unwrap();
    if span < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "sweep tolerances must span at least two decades; got {:.3e} .. {:.3e}",
            tols.last().unwrap(),
            tols.first().unwrap()
        )));
    }

    // Canonical keys dedupe aliases like "ra34pw2" vs "rosw:ra34pw2".
    let mut keys: Vec<String> = Vec::new();
    for text in scheme_texts {
        let s = parse_scheme(text)?;
        let key = format!("{}:{}", s.family(), s.name());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort();

    // Probe the defaults once; the instance itself stays cell-local.
    let probe = instance(problem, params)?;
    let dt0 = dt.unwrap_or(probe.default_dt);
    let t_end = max_time.unwrap_or(probe.default_max_time);
    drop(probe);
    let opts = |dt0: f64| SolveOptions {
        t0: 0.0,
        dt0,
        max_time: t_end,
        max_steps,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    };
    let adapt = |tol: f64| {
        AdaptConfig::new(ToleranceSpec {
            rtol: tol,
            atol: Atol::Scalar(tol),
        })
    };

    // Self-reference: first scheme key, three decades below the tightest
    // sweep point.
    let ref_tol = tols.last().unwrap() * 1e-3;
    let reference = {
        let inst = instance(problem, params)?;
        let scheme = parse_scheme(&keys[0])?;
        let res = solve_adaptive(&inst.problem, &scheme, &inst.u0, &opts(dt0), adapt(ref_tol))
            .map_err(|e| Error::Config(format!("reference solve failed: {e}")))?;
        if res.termination != Termination::ReachedMaxTime {
            return Err(Error::Config(format!(
                "reference solve at tol {ref_tol:.3e} ended with {:?}",
                res.termination
            )));
        }
        res.u
    };

    let cell = |key: &str, tol: f64| -> Result<SweepRow> {
        let inst = instance(problem, params)?;
        let scheme = parse_scheme(key)?;
        let start = Instant::now();
        let res = solve_adaptive(&inst.problem, &scheme, &inst.u0, &opts(dt0), adapt(tol))?;
        let wall_time = start.elapsed().as_secs_f64();
        if res.termination != Termination::ReachedMaxTime {
            return Err(Error::Config(format!(
                "sweep cell {key} at tol {tol:.3e} ended with {:?}",
                res.termination
            )));
        }
        Ok(SweepRow {
            scheme: key.to_string(),
            tolerance: tol,
            error: rel_inf(&res.u, &reference),
            steps: res.stats.steps_accepted,
            rhs_evals: function_evals(&res.stats),
            newton_iters: res.stats.nonlinear_iters,
            wall_time,
        })
    };

    // One thread per cell, joined in grid order.
    let results: Vec<Result<SweepRow>> = thread::scope(|scope| {
        let cell = &cell;
        let mut handles = Vec::new();
        for key in &keys {
            for &tol in &tols {
                handles.push(scope.spawn(move || cell(key, tol)));
            }
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep cell panicked"))
            .collect()
    });
    results.into_iter().collect()
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("scheme,tolerance,error,steps,rhs_evals,newton_iters,wall_time\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6e},{},{},{},{:.6}",
            r.scheme, r.tolerance, r.error, r.steps, r.rhs_evals, r.newton_iters, r.wall_time
        );
    }
    out
}

pub fn main(args: &SweepArgs) -> Result<i32> {
    let params = parse_params(args.seed_params.as_deref())?;
    let rows = sweep(
        &args.problem,
        params,
        &args.schemes,
        &args.rtols,
        args.dt,
        args.max_time,
        args.max_steps,
    )?;
    print!("{}", to_csv(&rows));
    Ok(0)
}
