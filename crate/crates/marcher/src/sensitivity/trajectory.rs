//! Forward-run storage for the backward sweeps.
//!
//! The recorder keeps scalar metadata (index, end time, step size) for every
//! accepted step and full states only at checkpoints. `get` restores any step
//! either directly or by replaying the recorded step ladder from the nearest
//! earlier checkpoint; replay calls the same `attempt` the forward run used,
//! with the same inputs, so the restored state is bitwise-equal to the
//! original. That only holds for steppers whose attempts are pure functions
//! of `(t, u, dt)`, which is what [`replay_safety`] checks.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::adapt::AdaptConfig;
use crate::error::{Error, Result};
use crate::events::EventSpec;
use crate::options::{FinalTimePolicy, SolveOptions};
use crate::problem::Problem;
use crate::steppers::{
    make_stepper, solve, AttemptRecord, SolveHooks, SolveResult, StepAttempt, StepObserver,
    StepStages, StepperConfig,
};
use crate::tableaux::registry::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointPolicy {
    /// Every accepted step keeps its state; `get` never recomputes.
    StoreAll,
    /// At most this many states retained at any time, thinned by stride
    /// doubling; missing steps are recomputed on demand.
    Binomial(usize),
}

/// Scalar record of one accepted step: kept for every step under either
/// policy, so the step ladder can always be replayed exactly.
#[derive(Debug, Clone, Copy)]
pub struct StepMeta {
    /// State index this step produced (1-based; state 0 is the initial
    /// condition).
    pub step_index: u64,
    /// Time at the end of the step, exactly as committed.
    pub t: f64,
    /// Step size the attempt actually used (not `t_k - t_{k-1}`, which can
    /// differ in the last bits). For event-cut steps this is the committed
    /// span, not the attempted size; those records are pinned, never
    /// replayed.
    pub dt: f64,
    /// An event fired on this step.
    pub event: bool,
}

#[derive(Debug, Clone)]
struct Checkpoint {
    t: f64,
    u: Vec<f64>,
    /// Stage states of the step ending here; empty for index 0 and for
    /// steppers that do not expose stages.
    stages: Vec<Vec<f64>>,
    /// Pinned checkpoints (event steps) are never thinned away: replay must
    /// not cross a discontinuity.
    pinned: bool,
}

#[derive(Debug)]
pub struct Trajectory {
    policy: CheckpointPolicy,
    dim: usize,
    meta: Vec<StepMeta>,
    records: BTreeMap<u64, Checkpoint>,
    stride: u64,
    max_retained: usize,
    replayed_attempts: u64,
    started: bool,
}

impl Trajectory {
    pub fn new(policy: CheckpointPolicy, dim: usize) -> Result<Self> {
        if let CheckpointPolicy::Binomial(k) = policy {
            if k < 2 {
                return Err(Error::Config(
                    "binomial checkpointing needs a budget of at least 2 \
                     (the initial state plus one interior slot)"
                        .into(),
                ));
            }
        }
        Ok(Trajectory {
            policy,
            dim,
            meta: Vec::new(),
            records: BTreeMap::new(),
            stride: 1,
            max_retained: 0,
            replayed_attempts: 0,
            started: false,
        })
    }

    /// Record state `step_index`, in order: 0 first, then each accepted step
    /// exactly once. `dt` is ignored for index 0. `pinned` marks event steps.
    pub fn set(
        &mut self,
        step_index: u64,
        t: f64,
        dt: f64,
        u: &[f64],
        stages: &[Vec<f64>],
        pinned: bool,
    ) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "trajectory state",
                expected: self.dim,
                got: u.len(),
            });
        }
        let expected = if self.started {
            self.meta.len() as u64 + 1
        } else {
            0
        };
        if step_index != expected {
            let msg = if step_index < expected {
                format!(
                    "duplicate trajectory insertion at step {step_index} \
                     (already recorded through {})",
                    expected.saturating_sub(1)
                )
            } else {
                format!(
                    "out-of-order trajectory insertion: got step {step_index}, \
                     expected {expected}"
                )
            };
            return Err(Error::Config(msg));
        }
        if step_index > 0 {
            self.meta.push(StepMeta {
                step_index,
                t,
                dt,
                event: pinned,
            });
        } else {
            self.started = true;
        }
        self.retain(
            step_index,
            Checkpoint {
                t,
                u: u.to_vec(),
                stages: stages.to_vec(),
                pinned,
            },
        )
    }

    fn retain(&mut self, index: u64, cp: Checkpoint) -> Result<()> {
        let budget = match self.policy {
            CheckpointPolicy::StoreAll => {
                self.records.insert(index, cp);
                self.max_retained = self.max_retained.max(self.records.len());
                return Ok(());
            }
            CheckpointPolicy::Binomial(k) => k,
        };
        if !(cp.pinned || index % self.stride == 0) {
            return Ok(());
        }
        while self.records.len() >= budget {
            let before = self.records.len();
            self.stride *= 2;
            let stride = self.stride;
            self.records
                .retain(|&i, r| i == 0 || r.pinned || i % stride == 0);
            if !(cp.pinned || index % self.stride == 0) {
                return Ok(());
            }
            if self.records.len() == before {
                // Nothing droppable: every slot is pinned.
                return Err(Error::Config(format!(
                    "event checkpoints exceed the binomial budget of {budget}; \
                     record with StoreAll instead"
                )));
            }
        }
        self.records.insert(index, cp);
        self.max_retained = self.max_retained.max(self.records.len());
        Ok(())
    }

    /// Retained checkpoint count (for StoreAll: steps + 1).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest checkpoint count ever held at once.
    pub fn max_retained(&self) -> usize {
        self.max_retained
    }

    /// Stepper attempts replayed so far to serve `get` calls.
    pub fn replayed_attempts(&self) -> u64 {
        self.replayed_attempts
    }

    /// Index of the last recorded state (= number of accepted steps).
    pub fn final_index(&self) -> u64 {
        self.meta.len() as u64
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &[StepMeta] {
        &self.meta
    }

    pub fn retained_indices(&self) -> Vec<u64> {
        self.records.keys().copied().collect()
    }

    pub fn has_events(&self) -> bool {
        self.meta.iter().any(|m| m.event)
    }

    /// Restore `(t, u, stage states)` for state `step_index`. Stage states
    /// belong to the step that ended there (empty at index 0).
    pub fn get(
        &mut self,
        step_index: u64,
        replayer: &Replayer,
    ) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        if !self.started {
            return Err(Error::Config("trajectory has no recorded run".into()));
        }
        if step_index > self.final_index() {
            return Err(Error::Config(format!(
                "trajectory index {step_index} is beyond the recorded run \
                 ({} steps)",
                self.final_index()
            )));
        }
        if let Some(cp) = self.records.get(&step_index) {
            return Ok((cp.t, cp.u.clone(), cp.stages.clone()));
        }
        let (&base, cp) = self
            .records
            .range(..=step_index)
            .next_back()
            .expect("state 0 is always retained");
        let mut t = cp.t;
        let mut u = cp.u.clone();
        let mut stages: Vec<Vec<f64>> = Vec::new();
        for k in base + 1..=step_index {
            let m = self.meta[k as usize - 1];
            let attempt = replayer.attempt_once(t, &u, m.dt)?;
            self.replayed_attempts += 1;
            t = m.t;
            u = attempt.u_new;
            stages = attempt.stages.states;
        }
        Ok((t, u, stages))
    }

    /// Stage states of the step ending at `step_index` (>= 1), replaying a
    /// single attempt from the previous state when no checkpoint holds them.
    pub fn stages_for_step(
        &mut self,
        step_index: u64,
        replayer: &Replayer,
    ) -> Result<Vec<Vec<f64>>> {
        if step_index == 0 || step_index > self.final_index() {
            return Err(Error::Config(format!(
                "no step ends at trajectory index {step_index}"
            )));
        }
        if let Some(cp) = self.records.get(&step_index) {
            if !cp.stages.is_empty() {
                return Ok(cp.stages.clone());
            }
        }
        let (t_prev, u_prev, _) = self.get(step_index - 1, replayer)?;
        let m = self.meta[step_index as usize - 1];
        let attempt = replayer.attempt_once(t_prev, &u_prev, m.dt)?;
        self.replayed_attempts += 1;
        Ok(attempt.stages.states)
    }

    /// Dump the retained checkpoints, ascending. Record layout: step index
    /// (u64 LE), time (f64 LE), state length (u64 LE), state values (f64 LE
    /// each). Stage data and step metadata are not spilled.
    pub fn write_states<W: Write>(&self, w: &mut W) -> Result<()> {
        for (&idx, cp) in &self.records {
            w.write_all(&idx.to_le_bytes())?;
            w.write_all(&cp.t.to_le_bytes())?;
            w.write_all(&(cp.u.len() as u64).to_le_bytes())?;
            for x in &cp.u {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Parse a spilled state stream back into `(step_index, t, u)` records.
pub fn read_states<R: Read>(r: &mut R) -> Result<Vec<(u64, f64, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut head = [0u8; 8];
    loop {
        match r.read(&mut head)? {
            0 => break,
            8 => {}
            got => {
                let mut rest = [0u8; 8];
                let mut filled = got;
                while filled < 8 {
                    let more = r.read(&mut rest[..8 - filled])?;
                    if more == 0 {
                        return Err(Error::Config(
                            "truncated trajectory spill: partial record header".into(),
                        ));
                    }
                    head[filled..filled + more].copy_from_slice(&rest[..more]);
                    filled += more;
                }
            }
        }
        let idx = u64::from_le_bytes(head);
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let t = f64::from_le_bytes(buf);
        r.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf) as usize;
        let mut u = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            u.push(f64::from_le_bytes(buf));
        }
        out.push((idx, t, u));
    }
    Ok(out)
}

/// Rejects configurations whose step attempts carry cross-step state, which
/// would make checkpoint replay diverge from the forward run: multistep
/// history, hot-started stage guesses, and reused factorizations.
pub fn replay_safety(scheme: &Scheme, cfg: &StepperConfig) -> Result<()> {
    if matches!(scheme, Scheme::Bdf { .. }) {
        return Err(Error::Config(
            "multistep schemes cannot be replayed from isolated checkpoints; \
             record with StoreAll".into(),
        ));
    }
    if cfg.stage_guess_extrapolate {
        return Err(Error::Config(
            "stage-guess extrapolation makes step attempts depend on the \
             previous step; disable it when checkpoint replay is needed"
                .into(),
        ));
    }
    if matches!(scheme, Scheme::Rosw(_)) && cfg.rosw_reuse_jacobian {
        return Err(Error::Config(
            "Jacobian reuse makes Rosenbrock-W attempts depend on the \
             previous step; disable it when checkpoint replay is needed"
                .into(),
        ));
    }
    Ok(())
}

/// Re-runs recorded steps. Each attempt gets a freshly built stepper, so the
/// result depends only on `(t, u, dt)`.
pub struct Replayer<'a> {
    problem: &'a Problem,
    scheme: &'a Scheme,
    cfg: StepperConfig,
}

impl<'a> Replayer<'a> {
    pub fn new(problem: &'a Problem, scheme: &'a Scheme, cfg: &StepperConfig) -> Self {
        Replayer {
            problem,
            scheme,
            cfg: cfg.clone(),
        }
    }

    fn attempt_once(&self, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt> {
        replay_safety(self.scheme, &self.cfg)?;
        let mut stepper = make_stepper(self.scheme, &self.cfg)?;
        let attempt = stepper.attempt(self.problem, t, u, dt)?;
        if !attempt.converged {
            return Err(Error::Config(format!(
                "trajectory replay diverged at t = {t}: the forward run \
                 accepted this step, so the stepper is not deterministic"
            )));
        }
        Ok(attempt)
    }
}

struct Recorder<'a> {
    traj: &'a mut Trajectory,
}

impl StepObserver for Recorder<'_> {
    fn on_start(&mut self, t0: f64, u0: &[f64]) -> Result<()> {
        self.traj.set(0, t0, 0.0, u0, &[], false)
    }

    fn on_attempt(&mut self, rec: &AttemptRecord) -> Result<()> {
        if !rec.accepted {
            return Ok(());
        }
        let u = rec.u_new.expect("accepted attempts carry the state");
        let empty = StepStages::default();
        let stages = rec.stages.unwrap_or(&empty);
        self.traj.set(
            rec.step_index + 1,
            rec.t_new,
            rec.dt,
            u,
            &stages.states,
            !rec.event_ids.is_empty(),
        )
    }
}

/// Run a solve while recording its trajectory.
///
/// Recording is observation-only: the returned [`SolveResult`] is
/// bitwise-identical to the same solve without recording. Binomial policies
/// additionally require replay-safe configurations (see [`replay_safety`]).
/// Steps where an event fired are pinned checkpoints, so replay never
/// crosses a handler's jump.
pub fn record_trajectory(
    problem: &Problem,
    scheme: &Scheme,
    u0: &[f64],
    opts: &SolveOptions,
    adapt: Option<AdaptConfig>,
    cfg: &StepperConfig,
    events: Option<&mut EventSpec>,
    policy: CheckpointPolicy,
) -> Result<(SolveResult, Trajectory)> {
    if matches!(policy, CheckpointPolicy::Binomial(_)) {
        replay_safety(scheme, cfg)?;
    }
    if opts.final_time == FinalTimePolicy::Interpolate {
        return Err(Error::Config(
            "the interpolating final-time policy detaches the returned state \
             from the last recorded step; record with MatchStep or StepOver"
                .into(),
        ));
    }
    let mut traj = Trajectory::new(policy, problem.dim())?;
    let result = {
        let mut recorder = Recorder { traj: &mut traj };
        let mut hooks = SolveHooks::none();
        hooks.events = events;
        hooks.observers.push(&mut recorder);
        solve(problem, scheme, u0, opts, adapt, cfg, &mut hooks)?
    };
    Ok((result, traj))
}
