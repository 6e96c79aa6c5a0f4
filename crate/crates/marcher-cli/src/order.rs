//! Fixed-step convergence study: integrate over a step-size ladder and read
//! the observed order off successive error ratios.

use clap::Args;
use marcher::options::{FinalTimePolicy, SolveOptions};
use marcher::problems::{instance, ProblemParams};
use marcher::steppers::{solve_fixed, Termination};
use marcher::{parse_scheme, Error, Result};

use crate::setup::{parse_params, rel_inf};

#[derive(Debug, Args)]
pub struct OrderArgs {
    #[arg(long)]
    pub problem: String,

    #[arg(long)]
    pub scheme: String,

    /// Step-size ladder, comma separated; needs at least two entries.
    #[arg(long, value_delimiter = ',')]
    pub dts: Vec<f64>,

    #[arg(long = "max-time")]
    pub max_time: Option<f64>,

    #[arg(long = "seed-params")]
    pub seed_params: Option<String>,
}

pub struct OrderReport {
    pub scheme: String,
    pub declared: usize,
    /// (dt, error at the final time), dt descending.
    pub rungs: Vec<(f64, f64)>,
    /// Observed order between adjacent rungs.
    pub pairwise: Vec<f64>,
    /// Mean of the pairwise estimates.
    pub observed: f64,
    /// Pairwise estimates scatter beyond 0.4 around the mean; the error is
    /// not in its asymptotic regime (non-smooth problem, rounding floor,
    /// or a too-coarse ladder).
    pub erratic: bool,
}

pub fn order_study(
    problem: &str,
    params: ProblemParams,
    scheme_text: &str,
    dts: &[f64],
    max_time: Option<f64>,
) -> Result<OrderReport> {
    let mut ladder: Vec<f64> = dts.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));
    ladder.dedup();
    if ladder.len() < 2 {
        return Err(Error::Config(
            "order study needs a dt ladder with at least two distinct step sizes".into(),
        ));
    }
    if ladder.iter().any(|&dt| !(dt.is_finite() && dt > 0.0)) {
        return Err(Error::Config(
            "order study step sizes must be positive and finite".into(),
        ));
    }

    let scheme = parse_scheme(scheme_text)?;
    let inst = instance(problem, params)?;
    let t_end = max_time.unwrap_or(inst.default_max_time);

    let run = |dt: f64| -> Result<Vec<f64>> {
        let opts = SolveOptions {
            t0: 0.0,
            dt0: dt,
            max_time: t_end,
            max_steps: usize::MAX,
            final_time: FinalTimePolicy::MatchStep,
            max_nonlinear_failures: None,
            stage_guess_extrapolate: false,
        };
        let res = solve_fixed(&inst.problem, &scheme, &inst.u0, &opts)?;
        if res.termination != Termination::ReachedMaxTime {
            return Err(Error::Config(format!(
                "fixed-step run at dt = {dt} ended with {:?} instead of reaching t = {t_end}",
                res.termination
            )));
        }
        Ok(res.u)
    };

    // Errors are measured against the closed form when the problem has one,
    // otherwise against a self-reference 16 times finer than the finest
    // rung (its own error is 16^p smaller and does not move the ratios).
    let reference = match &inst.exact {
        Some(f) => f(t_end),
        None => run(ladder.last().unwrap() / 16.0)?,
    };

    let mut rungs = Vec::with_capacity(ladder.len());
    for &dt in &ladder {
        let u = run(dt)?;
        // Floor at the subnormal boundary so exact hits do not produce
        // infinite ratios.
        let err = rel_inf(&u, &reference).max(f64::MIN_POSITIVE);
        rungs.push((dt, err));
    }

    let pairwise: Vec<f64> = rungs
        .windows(2)
        .map(|w| ((w[0].1 / w[1].1).ln()) / ((w[0].0 / w[1].0).ln()))
        .collect();
    let observed = pairwise.iter().sum::<f64>() / pairwise.len() as f64;
    let erratic = pairwise.iter().any(|p| (p - observed).abs() > 0.4);

    Ok(OrderReport {
        scheme: format!("{}:{}", scheme.family(), scheme.name()),
        declared: scheme.order(),
        rungs,
        pairwise,
        observed,
        erratic,
    })
}

pub fn main(args: &OrderArgs) -> Result<i32> {
    let params = parse_params(args.seed_params.as_deref())?;
    let report = order_study(
        &args.problem,
        params,
        &args.scheme,
        &args.dts,
        args.max_time,
    )?;

    println!(
        "problem {} scheme {} declared order {}",
        args.problem, report.scheme, report.declared
    );
    println!("dt,error,observed_order");
    for (i, (dt, err)) in report.rungs.iter().enumerate() {
        if i == 0 {
            println!("{dt},{err:.6e},");
        } else {
            println!("{dt},{err:.6e},{:.3}", report.pairwise[i - 1]);
        }
    }
    println!("observed order {:.3}", report.observed);
    if report.erratic {
        eprintln!(
            "warning: error ratios are erratic (pairwise orders {}); \
             the problem may be non-smooth over this interval or the \
             ladder is outside the asymptotic regime",
            report
                .pairwise
                .iter()
                .map(|p| format!("{p:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(0)
}
