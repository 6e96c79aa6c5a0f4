//! Run instrumentation: per-attempt records, machine-readable emission, and
//! a text summary of a finished run.
//!
//! Monitors are step observers and therefore observation-only: attaching any
//! number of them leaves the solve bitwise unchanged. A streaming monitor
//! that hits a sink error stops writing but lets the run finish.

use std::io::{self, Write};

use crate::adapt::{AdaptConfig, Controller};
use crate::error::{Error, Result};
use crate::options::{Atol, SolveOptions};
use crate::steppers::{AttemptRecord, SolveResult, StepObserver};
use crate::tableaux::registry::Scheme;

/// One step attempt as a monitor sees it. `t` is the end of the attempted
/// span, so accepted records carry monotone increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRecord {
    pub step_index: u64,
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
    /// Weighted error norm; absent for fixed-step runs and failed attempts.
    pub werr: Option<f64>,
    pub newton_iters: u64,
    pub linear_iters: u64,
    /// Events fired on this step, smallest id first.
    pub event_flags: Vec<usize>,
    /// Full state after the step; only on accepted records, and only when
    /// the monitor asked for snapshots.
    pub u_snapshot: Option<Vec<f64>>,
}

impl MonitorRecord {
    fn from_attempt(rec: &AttemptRecord, snapshot: bool) -> Self {
        MonitorRecord {
            step_index: rec.step_index,
            t: rec.t_new,
            dt: rec.dt,
            accepted: rec.accepted,
            werr: rec.werr,
            newton_iters: rec.newton_iters,
            linear_iters: rec.linear_iters,
            event_flags: rec.event_ids.to_vec(),
            u_snapshot: if snapshot && rec.accepted {
                rec.u_new.map(|u| u.to_vec())
            } else {
                None
            },
        }
    }
}

/// Sampling controls shared by the collecting and streaming monitors.
#[derive(Debug, Clone, Copy)]
pub struct MonitorOptions {
    /// Record every k-th attempt, counting from the first. 1 records all.
    pub every_k: u64,
    /// Carry the full state on accepted records.
    pub snapshot: bool,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        MonitorOptions {
            every_k: 1,
            snapshot: false,
        }
    }
}

/// Collects records in memory for later emission or inspection.
#[derive(Debug, Default)]
pub struct RecordingMonitor {
    options: MonitorOptions,
    records: Vec<MonitorRecord>,
    attempts_seen: u64,
}

impl RecordingMonitor {
    pub fn new(options: MonitorOptions) -> Self {
        RecordingMonitor {
            options,
            records: Vec::new(),
            attempts_seen: 0,
        }
    }

    pub fn records(&self) -> &[MonitorRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MonitorRecord> {
        self.records
    }
}

impl StepObserver for RecordingMonitor {
    fn on_attempt(&mut self, rec: &AttemptRecord) -> Result<()> {
        self.attempts_seen += 1;
        if (self.attempts_seen - 1) % self.options.every_k.max(1) == 0 {
            self.records
                .push(MonitorRecord::from_attempt(rec, self.options.snapshot));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Jsonl,
}

/// Writes records to a sink as the run progresses. A sink error stops
/// further writes (`failed` turns true) without touching the solve.
pub struct StreamingMonitor<W: Write> {
    sink: W,
    format: EmitFormat,
    options: MonitorOptions,
    attempts_seen: u64,
    state_width: Option<usize>,
    header_pending: bool,
    failed: bool,
}

impl<W: Write> StreamingMonitor<W> {
    pub fn new(sink: W, format: EmitFormat, options: MonitorOptions) -> Self {
        StreamingMonitor {
            sink,
            format,
            options,
            attempts_seen: 0,
            state_width: None,
            header_pending: true,
            failed: false,
        }
    }

    /// True once a sink write has failed; later records are dropped.
    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn into_sink(self) -> W {
        self.sink
    }

    fn try_write(&mut self, rec: Option<&MonitorRecord>) -> io::Result<()> {
        if self.header_pending {
            self.header_pending = false;
            if self.format == EmitFormat::Csv {
                let w = if self.options.snapshot {
                    self.state_width
                } else {
                    None
                };
                writeln!(self.sink, "{}", csv_header(w))?;
            }
        }
        if let Some(rec) = rec {
            match self.format {
                EmitFormat::Csv => writeln!(self.sink, "{}", csv_row(rec, self.state_width))?,
                EmitFormat::Jsonl => writeln!(self.sink, "{}", jsonl_row(rec))?,
            }
        }
        Ok(())
    }
}

impl<W: Write> StepObserver for StreamingMonitor<W> {
    fn on_start(&mut self, _t0: f64, u0: &[f64]) -> Result<()> {
        self.state_width = Some(u0.len());
        if !self.failed && self.try_write(None).is_err() {
            self.failed = true;
        }
        Ok(())
    }

    fn on_attempt(&mut self, rec: &AttemptRecord) -> Result<()> {
        self.attempts_seen += 1;
        if (self.attempts_seen - 1) % self.options.every_k.max(1) != 0 {
            return Ok(());
        }
        if self.failed {
            return Ok(());
        }
        let record = MonitorRecord::from_attempt(rec, self.options.snapshot);
        if self.try_write(Some(&record)).is_err() {
            self.failed = true;
        }
        Ok(())
    }
}

fn csv_header(state_width: Option<usize>) -> String {
    let mut h = String::from("step,t,dt,accepted,werr,newton_iters,linear_iters,events");
    if let Some(n) = state_width {
        for i in 0..n {
            h.push_str(&format!(",u{i}"));
        }
    }
    h
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(rec: &MonitorRecord, state_width: Option<usize>) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{}",
        rec.step_index,
        fmt_f64(rec.t),
        fmt_f64(rec.dt),
        rec.accepted,
        rec.werr.map(fmt_f64).unwrap_or_default(),
        rec.newton_iters,
        rec.linear_iters,
        rec.event_flags
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    if let Some(n) = state_width {
        match &rec.u_snapshot {
            Some(u) => {
                for x in u {
                    s.push(',');
                    s.push_str(&fmt_f64(*x));
                }
            }
            None => {
                for _ in 0..n {
                    s.push(',');
                }
            }
        }
    }
    s
}

fn jsonl_row(rec: &MonitorRecord) -> String {
    let mut s = format!(
        "{{\"step\":{},\"t\":{},\"dt\":{},\"accepted\":{},\"werr\":{},\
         \"newton_iters\":{},\"linear_iters\":{},\"events\":[{}]",
        rec.step_index,
        fmt_f64(rec.t),
        fmt_f64(rec.dt),
        rec.accepted,
        rec.werr.map(fmt_f64).unwrap_or_else(|| "null".into()),
        rec.newton_iters,
        rec.linear_iters,
        rec.event_flags
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    if let Some(u) = &rec.u_snapshot {
        for (i, x) in u.iter().enumerate() {
            s.push_str(&format!(",\"u{i}\":{}", fmt_f64(*x)));
        }
    }
    s.push('}');
    s
}

/// Serialize a record list. CSV always begins with its header line; the
/// state columns appear when any record carries a snapshot.
pub fn emit<W: Write>(
    records: &[MonitorRecord],
    format: EmitFormat,
    w: &mut W,
) -> io::Result<()> {
    let state_width = records
        .iter()
        .find_map(|r| r.u_snapshot.as_ref().map(|u| u.len()));
    if format == EmitFormat::Csv {
        writeln!(w, "{}", csv_header(state_width))?;
    }
    for rec in records {
        match format {
            EmitFormat::Csv => writeln!(w, "{}", csv_row(rec, state_width))?,
            EmitFormat::Jsonl => writeln!(w, "{}", jsonl_row(rec))?,
        }
    }
    Ok(())
}

/// Parse CSV produced by [`emit`] back into records. Floats were written
/// with 17 significant digits, so the round trip is exact.
pub fn parse_csv(text: &str) -> Result<Vec<MonitorRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("monitor CSV is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 8 || cols[..8] != ["step", "t", "dt", "accepted", "werr", "newton_iters", "linear_iters", "events"]
    {
        return Err(Error::Config(format!(
            "unrecognized monitor CSV header: {header}"
        )));
    }
    let state_width = cols.len() - 8;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Config(format!(
                "monitor CSV line {} has {} fields, header has {}",
                lineno + 2,
                f.len(),
                cols.len()
            )));
        }
        let bad = |what: &str| Error::Config(format!("monitor CSV line {}: bad {what}", lineno + 2));
        let rec = MonitorRecord {
            step_index: f[0].parse().map_err(|_| bad("step"))?,
            t: f[1].parse().map_err(|_| bad("t"))?,
            dt: f[2].parse().map_err(|_| bad("dt"))?,
            accepted: f[3].parse().map_err(|_| bad("accepted"))?,
            werr: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().map_err(|_| bad("werr"))?)
            },
            newton_iters: f[5].parse().map_err(|_| bad("newton_iters"))?,
            linear_iters: f[6].parse().map_err(|_| bad("linear_iters"))?,
            event_flags: if f[7].is_empty() {
                Vec::new()
            } else {
                f[7].split(';')
                    .map(|x| x.parse().map_err(|_| bad("events")))
                    .collect::<Result<Vec<usize>>>()?
            },
            u_snapshot: if state_width > 0 && !f[8].is_empty() {
                Some(
                    f[8..8 + state_width]
                        .iter()
                        .map(|x| x.parse().map_err(|_| bad("state")))
                        .collect::<Result<Vec<f64>>>()?,
                )
            } else {
                None
            },
        };
        out.push(rec);
    }
    Ok(out)
}

fn abscissa_line(label: &str, values: &[f64]) -> String {
    let mut s = format!("    {label} =");
    for v in values {
        s.push_str(&format!("  {v:.6}"));
    }
    s
}

fn scheme_block(scheme: &Scheme) -> String {
    match scheme {
        Scheme::Erk(tab) => {
            let mut s = format!("    Runge-Kutta {} (order {})\n", tab.name, tab.order);
            s.push_str(&abscissa_line("Abscissa of A      ", &tab.c));
            s.push('\n');
            s
        }
        Scheme::Theta { theta, label } => {
            format!("    Theta method {label}\n    Theta= {theta}\n")
        }
        Scheme::Bdf { order } => format!("    BDF order {order}\n"),
        Scheme::ArkImex(tab) => {
            let mut s = format!("    ARK IMEX {} (order {})\n", tab.name, tab.order);
            s.push_str(&abscissa_line("Abscissa of A      ", &tab.c));
            s.push('\n');
            s
        }
        Scheme::Rosw(tab) => {
            let n = tab.stages();
            let row_sum = |m: &crate::matrix::DenseMatrix, i: usize| -> f64 {
                (0..n).map(|j| m.get(i, j)).sum()
            };
            let a: Vec<f64> = (0..n).map(|i| row_sum(&tab.a, i)).collect();
            let ag: Vec<f64> = (0..n)
                .map(|i| row_sum(&tab.a, i) + row_sum(&tab.gamma, i))
                .collect();
            let mut s = format!("    Rosenbrock-W {}\n", tab.name);
            s.push_str(&abscissa_line("Abscissa of A      ", &a));
            s.push('\n');
            s.push_str(&abscissa_line("Abscissa of A+Gamma", &ag));
            s.push('\n');
            s
        }
    }
}

fn atol_text(atol: &Atol) -> String {
    match atol {
        Atol::Scalar(a) => format!("{a}"),
        Atol::Vector(v) => {
            let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            format!("[{}]", parts.join(", "))
        }
    }
}

fn adapt_block(adapt: Option<&AdaptConfig>) -> String {
    let Some(cfg) = adapt else {
        return String::from("  Adapt Object:\n    type: none (fixed step)\n");
    };
    let mut s = String::from("  Adapt Object:\n");
    match cfg.controller {
        Controller::Basic => {
            s.push_str("    type: basic\n");
            s.push_str("    number of candidates 1\n");
            s.push_str(&format!(
                "      Basic: clip fastest decrease {}, fastest increase {}\n",
                cfg.clip_low, cfg.clip_high
            ));
            s.push_str(&format!(
                "      Basic: safety factor {}, extra factor after step rejection {}\n",
                cfg.safety, cfg.reject_extra
            ));
        }
        Controller::Dsp {
            beta1,
            beta2,
            alpha2,
        } => {
            s.push_str("    type: dsp\n");
            s.push_str("    number of candidates 1\n");
            s.push_str(&format!(
                "      DSP: filter coefficients beta1={beta1}, beta2={beta2}, alpha2={alpha2}\n"
            ));
            s.push_str(&format!(
                "      DSP: clip fastest decrease {}, fastest increase {}, safety factor {}\n",
                cfg.clip_low, cfg.clip_high, cfg.safety
            ));
        }
    }
    s.push_str(&format!(
        "    tolerances: relative={}, absolute={}\n",
        cfg.tol.rtol,
        atol_text(&cfg.tol.atol)
    ));
    s
}

/// Text report of a finished run: scheme, adapter constants, tolerances,
/// and the work counters, all matching the `SolveResult` exactly.
pub fn view_summary(
    result: &SolveResult,
    scheme: &Scheme,
    opts: &SolveOptions,
    adapt: Option<&AdaptConfig>,
) -> String {
    let st = &result.stats;
    let mut s = String::from("Integrator Object:\n");
    s.push_str(&format!("  type: {}\n", scheme.family()));
    s.push_str(&format!("  maximum steps={}\n", opts.max_steps));
    s.push_str(&format!("  maximum time={}\n", opts.max_time));
    s.push_str(&format!(
        "  total number of nonlinear solver iterations={}\n",
        st.nonlinear_iters
    ));
    s.push_str(&format!(
        "  total number of nonlinear solve failures={}\n",
        st.nonlinear_failures
    ));
    s.push_str(&format!(
        "  total number of linear solver iterations={}\n",
        st.linear_iters
    ));
    s.push_str(&format!(
        "  total number of rejected steps={}\n",
        st.steps_rejected
    ));
    s.push_str(&scheme_block(scheme));
    s.push_str(&adapt_block(adapt));
    s.push_str("  Linear solver:\n    type: lu\n");
    s.push_str(&format!(
        "      LU: dense out-of-place factorization with partial pivoting\n      rows={n}, cols={n}\n",
        n = result.u.len()
    ));
    s.push_str(&format!(
        "  accepted steps={}, final time={}, termination={:?}\n",
        st.steps_accepted, result.t, result.termination
    ));
    s
}
