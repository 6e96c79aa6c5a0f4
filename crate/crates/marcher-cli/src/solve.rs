//! Single integration: JSON result on stdout, optional monitor stream to a
//! file, exit 2 when the run diverges.

use std::fs::File;
use std::io::{BufWriter, Write};

use clap::Args;
use marcher::events::EventSpec;
use marcher::monitor::{MonitorOptions, StreamingMonitor};
use marcher::steppers::{solve, SolveHooks, SolveResult, StepObserver, StepperConfig, Termination};
use marcher::{Error, Result};

use crate::setup::{self, RunArgs, Setup};

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn main(args: &SolveArgs) -> Result<i32> {
    let s = setup::build(&args.run)?;
    let res = integrate(&s, &args.run, None, Vec::new())?;
    finish(&res)
}

/// Run the configured solve with optional events and extra observers,
/// streaming to the monitor file when one was requested.
pub fn integrate<'a>(
    s: &'a Setup,
    run: &RunArgs,
    events: Option<&'a mut EventSpec>,
    extra: Vec<&'a mut dyn StepObserver>,
) -> Result<SolveResult> {
    let mut monitor = match &run.monitor {
        Some(path) => {
            let fmt = setup::monitor_format(path)?;
            let file = File::create(path).map_err(|e| {
                Error::Config(format!(
                    "cannot create monitor file '{}': {e}",
                    path.display()
                ))
            })?;
            Some(StreamingMonitor::new(
                BufWriter::new(file),
                fmt,
                MonitorOptions {
                    every_k: 1,
                    snapshot: true,
                },
            ))
        }
        None => None,
    };

    let mut hooks = SolveHooks::none();
    hooks.events = events;
    for obs in extra {
        hooks.observers.push(obs);
    }
    if let Some(m) = monitor.as_mut() {
        hooks.observers.push(m);
    }
    let res = solve(
        &s.inst.problem,
        &s.scheme,
        &s.inst.u0,
        &s.opts,
        s.adapt.clone(),
        &StepperConfig::default(),
        &mut hooks,
    )?;
    if let Some(m) = monitor {
        if m.failed() {
            eprintln!("warning: monitor emission stopped after a sink write failure; the solve was unaffected");
        }
        m.into_sink().flush()?;
    }
    Ok(res)
}

/// Print the result JSON and map the termination to an exit code.
pub fn finish(res: &SolveResult) -> Result<i32> {
    println!("{}", result_json(res));
    if res.termination == Termination::Diverged {
        eprintln!("solve diverged: the step size underflowed near t = {}", res.t);
        return Ok(2);
    }
    Ok(0)
}

pub fn result_json(res: &SolveResult) -> String {
    let st = &res.stats;
    let v = serde_json::json!({
        "final_t": res.t,
        "final_u": res.u,
        "counters": {
            "steps_accepted": st.steps_accepted,
            "steps_rejected": st.steps_rejected,
            "nonlinear_iters": st.nonlinear_iters,
            "nonlinear_failures": st.nonlinear_failures,
            "linear_iters": st.linear_iters,
            "rhs_evals": st.evals.rhs,
            "residual_evals": st.evals.residual,
            "jacobian_evals": st.evals.jacobian,
        },
        "termination": format!("{:?}", res.termination),
    });
    serde_json::to_string_pretty(&v).expect("result fields are plain numbers and strings")
}
