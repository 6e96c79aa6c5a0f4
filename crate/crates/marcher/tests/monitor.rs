//! Monitor checks: attempt-level record capture, sampling, CSV/JSONL
//! emission and round-trip, sink-failure containment, observation purity,
//! and the text summary.

use std::io::{self, Write};

use marcher::adapt::AdaptConfig;
use marcher::monitor::{
    emit, parse_csv, view_summary, EmitFormat, MonitorOptions, MonitorRecord, RecordingMonitor,
    StreamingMonitor,
};
use marcher::options::{Atol, FinalTimePolicy, SolveOptions, ToleranceSpec};
use marcher::problem::Problem;
use marcher::problems::{kinetics, KINETICS_K, KINETICS_U0};
use marcher::steppers::{solve, SolveHooks, SolveResult, StepperConfig, Termination};
use marcher::tableaux::registry::parse_scheme;

fn opts(dt: f64, max_time: f64) -> SolveOptions {
    SolveOptions {
        t0: 0.0,
        dt0: dt,
        max_time,
        max_steps: 100_000,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    }
}

fn tol(rtol: f64, atol: f64) -> ToleranceSpec {
    ToleranceSpec {
        rtol,
        atol: Atol::Scalar(atol),
    }
}

fn kinetics_setup() -> (Problem, Vec<f64>) {
    (kinetics(KINETICS_K), KINETICS_U0.to_vec())
}

/// Adaptive kinetics run with monitors attached; dt0 far above the
/// tolerance-feasible step so the controller must reject at least once.
fn monitored_run(monitor: &mut RecordingMonitor) -> SolveResult {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("ra34pw2").unwrap();
    let mut hooks = SolveHooks::none();
    hooks.observers.push(monitor);
    solve(
        &p,
        &scheme,
        &u0,
        &opts(5.0, 10.0),
        Some(AdaptConfig::new(tol(1e-8, 1e-8))),
        &StepperConfig::default(),
        &mut hooks,
    )
    .unwrap()
}

#[test]
fn every_attempt_yields_one_record() {
    let mut mon = RecordingMonitor::new(MonitorOptions::default());
    let res = monitored_run(&mut mon);
    assert_eq!(res.termination, Termination::ReachedMaxTime);
    let st = res.stats;
    assert!(st.steps_rejected > 0, "run was meant to reject");
    let attempts = st.steps_accepted + st.steps_rejected + st.nonlinear_failures;
    assert_eq!(mon.records().len() as u64, attempts);

    let accepted = mon.records().iter().filter(|r| r.accepted).count() as u64;
    assert_eq!(accepted, st.steps_accepted);

    // Accepted records carry monotone increasing times.
    let mut last = f64::NEG_INFINITY;
    for r in mon.records().iter().filter(|r| r.accepted) {
        assert!(r.t > last);
        last = r.t;
    }
}

#[test]
fn snapshots_only_on_accepted_records() {
    let mut mon = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    monitored_run(&mut mon);
    for r in mon.records() {
        if r.accepted {
            assert_eq!(r.u_snapshot.as_ref().map(|u| u.len()), Some(3));
        } else {
            assert!(r.u_snapshot.is_none());
        }
    }

    let mut bare = RecordingMonitor::new(MonitorOptions::default());
    monitored_run(&mut bare);
    assert!(bare.records().iter().all(|r| r.u_snapshot.is_none()));
}

#[test]
fn every_k_subsamples_attempts() {
    let mut all = RecordingMonitor::new(MonitorOptions::default());
    monitored_run(&mut all);
    let n = all.records().len();

    let mut thin = RecordingMonitor::new(MonitorOptions {
        every_k: 3,
        snapshot: false,
    });
    monitored_run(&mut thin);
    assert_eq!(thin.records().len(), n.div_ceil(3));
    assert_eq!(thin.records()[0], all.records()[0]);
}

#[test]
fn two_sinks_see_identical_streams() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("ra34pw2").unwrap();
    let mut a = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    let mut b = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    let mut hooks = SolveHooks::none();
    hooks.observers.push(&mut a);
    hooks.observers.push(&mut b);
    solve(
        &p,
        &scheme,
        &u0,
        &opts(0.01, 5.0),
        Some(AdaptConfig::new(tol(1e-6, 1e-6))),
        &StepperConfig::default(),
        &mut hooks,
    )
    .unwrap();
    assert!(!a.records().is_empty());
    assert_eq!(a.records(), b.records());
}

#[test]
fn csv_round_trips_exactly() {
    let mut mon = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    monitored_run(&mut mon);

    let mut buf = Vec::new();
    emit(mon.records(), EmitFormat::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(
        "step,t,dt,accepted,werr,newton_iters,linear_iters,events,u0,u1,u2\n"
    ));
    let parsed = parse_csv(&text).unwrap();
    assert_eq!(parsed.as_slice(), mon.records());
}

#[test]
fn csv_without_snapshots_has_fixed_columns() {
    let mut mon = RecordingMonitor::new(MonitorOptions::default());
    monitored_run(&mut mon);
    let mut buf = Vec::new();
    emit(mon.records(), EmitFormat::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,t,dt,accepted,werr,newton_iters,linear_iters,events"
    );
    for line in lines {
        assert_eq!(line.split(',').count(), 8);
    }
    let parsed = parse_csv(&text).unwrap();
    assert_eq!(parsed.as_slice(), mon.records());
}

#[test]
fn empty_record_list_emits_header_only() {
    let mut buf = Vec::new();
    emit(&[], EmitFormat::Csv, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "step,t,dt,accepted,werr,newton_iters,linear_iters,events\n"
    );

    let mut buf = Vec::new();
    emit(&[], EmitFormat::Jsonl, &mut buf).unwrap();
    assert!(buf.is_empty());
}

#[test]
fn single_record_round_trips() {
    let rec = MonitorRecord {
        step_index: 7,
        t: 0.123456789012345678,
        dt: 1e-3,
        accepted: true,
        werr: Some(0.25),
        newton_iters: 4,
        linear_iters: 4,
        event_flags: vec![0, 2],
        u_snapshot: None,
    };
    let mut buf = Vec::new();
    emit(std::slice::from_ref(&rec), EmitFormat::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    let parsed = parse_csv(&text).unwrap();
    assert_eq!(parsed, vec![rec]);
}

#[test]
fn jsonl_lines_carry_the_same_keys() {
    let mut mon = RecordingMonitor::new(MonitorOptions {
        every_k: 1,
        snapshot: true,
    });
    monitored_run(&mut mon);
    let mut buf = Vec::new();
    emit(mon.records(), EmitFormat::Jsonl, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), mon.records().len());
    for (line, rec) in text.lines().zip(mon.records()) {
        for key in [
            "\"step\":",
            "\"t\":",
            "\"dt\":",
            "\"accepted\":",
            "\"werr\":",
            "\"newton_iters\":",
            "\"linear_iters\":",
            "\"events\":",
        ] {
            assert!(line.contains(key), "{line}");
        }
        assert!(line.starts_with('{') && line.ends_with('}'));
        assert_eq!(line.contains("\"u0\":"), rec.u_snapshot.is_some());
        if rec.werr.is_none() {
            assert!(line.contains("\"werr\":null"));
        }
    }
}

/// Accepts a bounded number of writes, then reports a full sink.
struct FailAfter {
    writes_left: usize,
}

impl Write for FailAfter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.writes_left == 0 {
            return Err(io::Error::other("sink full"));
        }
        self.writes_left -= 1;
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[test]
fn sink_failure_stops_emission_not_the_solve() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("ra34pw2").unwrap();
    let o = opts(0.01, 5.0);
    let adapt = AdaptConfig::new(tol(1e-6, 1e-6));
    let cfg = StepperConfig::default();

    let bare = solve(&p, &scheme, &u0, &o, Some(adapt.clone()), &cfg, &mut SolveHooks::none())
        .unwrap();

    let mut mon = StreamingMonitor::new(
        FailAfter { writes_left: 3 },
        EmitFormat::Csv,
        MonitorOptions::default(),
    );
    let res = {
        let mut hooks = SolveHooks::none();
        hooks.observers.push(&mut mon);
        solve(&p, &scheme, &u0, &o, Some(adapt), &cfg, &mut hooks).unwrap()
    };
    assert!(mon.failed());
    assert_eq!(res.t.to_bits(), bare.t.to_bits());
    assert_eq!(res.stats, bare.stats);
}

#[test]
fn monitors_are_observation_only() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("ra34pw2").unwrap();
    let o = opts(0.01, 5.0);
    let adapt = AdaptConfig::new(tol(1e-6, 1e-6));
    let cfg = StepperConfig::default();

    let bare = solve(&p, &scheme, &u0, &o, Some(adapt.clone()), &cfg, &mut SolveHooks::none())
        .unwrap();

    let mut rec = RecordingMonitor::new(MonitorOptions {
        every_k: 2,
        snapshot: true,
    });
    let mut stream = StreamingMonitor::new(Vec::new(), EmitFormat::Jsonl, MonitorOptions::default());
    let watched = {
        let mut hooks = SolveHooks::none();
        hooks.observers.push(&mut rec);
        hooks.observers.push(&mut stream);
        solve(&p, &scheme, &u0, &o, Some(adapt), &cfg, &mut hooks).unwrap()
    };

    assert_eq!(bare.t.to_bits(), watched.t.to_bits());
    let ub: Vec<u64> = bare.u.iter().map(|x| x.to_bits()).collect();
    let uw: Vec<u64> = watched.u.iter().map(|x| x.to_bits()).collect();
    assert_eq!(ub, uw);
    assert_eq!(bare.stats, watched.stats);
    assert!(!stream.failed());
    assert!(!stream.into_sink().is_empty());
}

#[test]
fn accepted_dt_column_sums_to_elapsed_time() {
    let mut mon = RecordingMonitor::new(MonitorOptions::default());
    let res = monitored_run(&mut mon);
    let sum: f64 = mon
        .records()
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.dt)
        .sum();
    let n = res.stats.steps_accepted as f64;
    let elapsed = res.t - 0.0;
    assert!(
        (sum - elapsed).abs() <= n * f64::EPSILON * elapsed.abs().max(1.0),
        "sum {sum} elapsed {elapsed}"
    );
}

#[test]
fn step_sizes_grow_as_the_kinetics_transient_decays() {
    // The reaction relaxes toward equilibrium, so the controller should
    // drive dt up over the run; the emitted dt column is plot-ready.
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("ra34pw2").unwrap();
    let mut mon = RecordingMonitor::new(MonitorOptions::default());
    let mut hooks = SolveHooks::none();
    hooks.observers.push(&mut mon);
    solve(
        &p,
        &scheme,
        &u0,
        &opts(1e-3, 20.0),
        Some(AdaptConfig::new(tol(1e-6, 1e-6))),
        &StepperConfig::default(),
        &mut hooks,
    )
    .unwrap();
    let dts: Vec<f64> = mon
        .records()
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.dt)
        .collect();
    // Ignore the final-time cut on the last step.
    let body = &dts[..dts.len() - 1];
    assert!(body.last().unwrap() > &(10.0 * body[0]));
    let decreases = body.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(
        decreases * 5 <= body.len(),
        "{decreases} decreases over {} steps",
        body.len()
    );
}

#[test]
fn summary_mirrors_run_configuration_and_counters() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("rosw:ra34pw2").unwrap();
    let o = SolveOptions {
        t0: 0.0,
        dt0: 1e-3,
        max_time: 20.0,
        max_steps: 1000,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    };
    let adapt = AdaptConfig::new(tol(1e-6, 1e-6));
    let res = solve(
        &p,
        &scheme,
        &u0,
        &o,
        Some(adapt.clone()),
        &StepperConfig::default(),
        &mut SolveHooks::none(),
    )
    .unwrap();

    let text = view_summary(&res, &scheme, &o, Some(&adapt));
    for needle in [
        "type: rosw",
        "maximum steps=1000",
        "maximum time=20",
        "Rosenbrock-W ra34pw2",
        "type: basic",
        "number of candidates 1",
        "Basic: clip fastest decrease 0.1, fastest increase 10",
        "Basic: safety factor 0.9, extra factor after step rejection 0.5",
        "tolerances: relative=0.000001, absolute=0.000001",
        "type: lu",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
    // Counters in the text equal the counters in the result.
    let st = res.stats;
    for needle in [
        format!(
            "total number of nonlinear solver iterations={}",
            st.nonlinear_iters
        ),
        format!(
            "total number of nonlinear solve failures={}",
            st.nonlinear_failures
        ),
        format!("total number of linear solver iterations={}", st.linear_iters),
        format!("total number of rejected steps={}", st.steps_rejected),
    ] {
        assert!(text.contains(&needle), "missing {needle:?} in:\n{text}");
    }
    // Abscissa rows list the stage times of the tableau and its shifted
    // companion, six decimals each.
    assert!(text.contains("Abscissa of A       =  0.000000"), "{text}");
    assert!(text.contains("Abscissa of A+Gamma =  0.435867"), "{text}");
}

#[test]
fn zero_step_solve_reports_zero_counters() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("rk4").unwrap();
    let o = SolveOptions {
        t0: 5.0,
        dt0: 0.1,
        max_time: 5.0,
        max_steps: 10,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    };
    let res = solve(
        &p,
        &scheme,
        &u0,
        &o,
        None,
        &StepperConfig::default(),
        &mut SolveHooks::none(),
    )
    .unwrap();
    assert_eq!(res.termination, Termination::ReachedMaxTime);
    assert_eq!(res.stats.steps_accepted, 0);

    let text = view_summary(&res, &scheme, &o, None);
    for needle in [
        "total number of nonlinear solver iterations=0",
        "total number of nonlinear solve failures=0",
        "total number of linear solver iterations=0",
        "total number of rejected steps=0",
        "type: none (fixed step)",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}
