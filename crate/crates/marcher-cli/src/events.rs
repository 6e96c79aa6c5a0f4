//! Event demo: integrate with the problem's event spec attached, then dump
//! the accepted trajectory and the event log as CSV files. A problem with
//! no event spec degrades to a plain `solve`.

use std::fs;
use std::fmt::Write as _;

use clap::Args;
use marcher::monitor::{emit, EmitFormat, MonitorOptions, RecordingMonitor};
use marcher::steppers::SolveResult;
use marcher::Result;

use crate::setup::{self, RunArgs};
use crate::solve::{finish, integrate};

#[derive(Debug, Args)]
pub struct EventsArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Per-attempt trajectory CSV (written only when the problem has events).
    #[arg(long = "trajectory-out", default_value = "trajectory.csv")]
    pub trajectory_out: std::path::PathBuf,

    /// Event log CSV: event id, located time, state there, and the
    /// indicator residual at the located root.
    #[arg(long = "events-out", default_value = "events.csv")]
    pub events_out: std::path::PathBuf,
}

pub fn main(args: &EventsArgs) -> Result<i32> {
    let mut s = setup::build(&args.run)?;
    let Some(mut spec) = s.inst.events.take() else {
        let res = integrate(&s, &args.run, None, Vec::new())?;
        return finish(&res);
    };

    let mut recorder = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    let res = integrate(&s, &args.run, Some(&mut spec), vec![&mut recorder])?;

    let mut buf = Vec::new();
    emit(recorder.records(), EmitFormat::Csv, &mut buf)?;
    fs::write(&args.trajectory_out, buf)?;
    fs::write(&args.events_out, events_csv(&res))?;

    finish(&res)
}

/// One row per fired event, 17 significant digits throughout.
pub fn events_csv(res: &SolveResult) -> String {
    let dim = res.u.len();
    let mut out = String::from("event_id,t");
    for i in 0..dim {
        let _ = write!(out, ",u{i}");
    }
    out.push_str(",h_residual\n");
    for ev in &res.events {
        let _ = write!(out, "{},{:.16e}", ev.event_id, ev.t_star);
        for v in &ev.u_star {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{:.16e}", ev.h_value_at_t_star);
    }
    out
}
