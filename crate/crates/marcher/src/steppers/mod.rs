//! The time-stepping loop and the one-step methods it drives.
//!
//! A `Stepper` produces one attempted step at a time; the loop in [`solve`]
//! owns everything between steps: acceptance control, step-size policy,
//! event detection and re-cutting, final-time handling, counters, and the
//! observer/trajectory hooks. Steppers never advance global state
//! themselves; cross-step memory (multistep history, cached factorizations,
//! hot-start data) is updated only through `commit`/`reject`/`discontinuity`,
//! so the loop can retry or truncate attempts freely.

pub mod arkimex;
pub mod bdf;
pub mod erk;
pub mod interp;
pub mod rosw;
pub mod theta;

use crate::adapt::{weighted_error_norm, AdaptConfig, StepController};
use crate::error::{Error, Result};
use crate::events::{
    locate_event, scan_events, time_resolution_floor, EventRecord, EventSpec,
};
use crate::newton::NewtonParams;
use crate::options::{FinalTimePolicy, SolveOptions};
use crate::problem::{EquationKind, EvalCounts, Problem};
use crate::tableaux::registry::Scheme;
pub use interp::Interpolant;

/// Stage data an accepted step leaves behind for dense output and for the
/// transposed sweeps of the sensitivity module. Steppers that reconstruct
/// what they need on demand leave these empty.
#[derive(Debug, Clone, Default)]
pub struct StepStages {
    /// Stage states, in stage order.
    pub states: Vec<Vec<f64>>,
    /// Stage slopes (time derivatives), in stage order.
    pub slopes: Vec<Vec<f64>>,
}

/// Result of one attempted step from `(t, u)` over `dt`.
#[derive(Debug, Clone)]
pub struct StepAttempt {
    pub u_new: Vec<f64>,
    /// Local error estimate, when the scheme carries one.
    pub err: Option<Vec<f64>>,
    /// The lower-order companion solution the estimate compares against,
    /// used only for error weighting.
    pub u_alt: Option<Vec<f64>>,
    pub stages: StepStages,
    pub newton_iters: u64,
    pub linear_iters: u64,
    /// False when the stage solves did not converge (or blew up); the loop
    /// retries with a smaller step instead of treating it as an error.
    pub converged: bool,
}

impl StepAttempt {
    /// An attempt that failed recoverably before producing a state.
    pub fn failed(newton_iters: u64, linear_iters: u64) -> Self {
        StepAttempt {
            u_new: Vec::new(),
            err: None,
            u_alt: None,
            stages: StepStages::default(),
            newton_iters,
            linear_iters,
            converged: false,
        }
    }
}

/// Map non-finite evaluation failures to `None` (recoverable: the loop
/// shrinks the step); everything else stays an error.
pub(crate) fn recover<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NonFinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One-step integration method. Implementations must make `attempt` a pure
/// function of `(problem, t, u, dt)` plus whatever was last committed, so
/// that replaying a recorded step ladder reproduces the trajectory.
pub trait Stepper {
    fn name(&self) -> String;
    fn order(&self) -> usize;
    /// The order entering the controller's exponent, `min` of the pair for
    /// embedded schemes, the current ramp order for multistep.
    fn control_order(&self) -> usize;
    fn has_error_estimate(&self) -> bool;

    fn attempt(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt>;

    /// The step was accepted; absorb whatever carries across steps.
    fn commit(&mut self, _t: f64, _dt: f64, _u_old: &[f64], _u_new: &[f64], _stages: &StepStages) {}

    /// The attempt was rejected or failed; the next attempt restarts from
    /// the same `(t, u)`.
    fn reject(&mut self) {}

    /// The solution was modified discontinuously at the current point
    /// (event handler fired): drop history that assumed smoothness.
    fn discontinuity(&mut self) {}

    /// Dense output over the step just described by `commit`'s arguments.
    fn interpolant(
        &self,
        p: &Problem,
        t0: f64,
        dt: f64,
        u0: &[f64],
        u1: &[f64],
        stages: &StepStages,
    ) -> Result<Interpolant> {
        hermite_or_linear(p, t0, dt, u0, u1, stages)
    }
}

/// Cubic Hermite when both endpoint derivatives are computable, otherwise a
/// straight line. Used by schemes without their own dense-output formula.
pub(crate) fn hermite_or_linear(
    p: &Problem,
    t0: f64,
    dt: f64,
    u0: &[f64],
    u1: &[f64],
    _stages: &StepStages,
) -> Result<Interpolant> {
    let du0 = p.udot_from_state(t0, u0);
    let du1 = p.udot_from_state(t0 + dt, u1);
    match (du0, du1) {
        (Ok(du0), Ok(du1)) => Ok(Interpolant::Hermite {
            u0: u0.to_vec(),
            u1: u1.to_vec(),
            du0,
            du1,
            dt,
        }),
        _ => Ok(Interpolant::Linear {
            u0: u0.to_vec(),
            u1: u1.to_vec(),
        }),
    }
}

/// Construction knobs shared by the implicit steppers.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub newton: NewtonParams,
    /// Rosenbrock-W only: keep the factored stage matrix across steps while
    /// the step size is unchanged (at most [`rosw::JACOBIAN_REUSE_LIMIT`]
    /// steps). Requires a tableau that retains order with a stale Jacobian.
    pub rosw_reuse_jacobian: bool,
    /// Additive schemes only: fold the explicit right-hand side into the
    /// stage residuals instead of propagating it with the explicit table.
    pub arkimex_fully_implicit: bool,
    /// The run has no error controller; multistep startup refines its first
    /// step internally instead of relying on small controller steps.
    pub fixed_step: bool,
    /// Start implicit stage iterations from the previous step's
    /// extrapolated interpolant instead of the current state.
    pub stage_guess_extrapolate: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            newton: NewtonParams::default(),
            rosw_reuse_jacobian: false,
            arkimex_fully_implicit: false,
            fixed_step: false,
            stage_guess_extrapolate: false,
        }
    }
}

/// Instantiate the stepper for a scheme.
pub fn make_stepper(scheme: &Scheme, cfg: &StepperConfig) -> Result<Box<dyn Stepper>> {
    Ok(match scheme {
        Scheme::Erk(tab) => Box::new(erk::ErkStepper::new(tab.clone())),
        Scheme::Theta { theta, .. } => Box::new(theta::ThetaStepper::new(
            *theta,
            cfg.newton.clone(),
            cfg.stage_guess_extrapolate,
        )?),
        Scheme::Bdf { order } => Box::new(bdf::BdfStepper::new(
            *order,
            cfg.newton.clone(),
            cfg.fixed_step,
        )?),
        Scheme::ArkImex(tab) => Box::new(arkimex::ArkImexStepper::new(
            tab.clone(),
            cfg.newton.clone(),
            cfg.arkimex_fully_implicit,
        )),
        Scheme::Rosw(tab) => Box::new(rosw::RoswStepper::new(
            tab.clone(),
            cfg.rosw_reuse_jacobian,
        )?),
    })
}

/// Why the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedMaxTime,
    ReachedMaxSteps,
    EventTerminated,
    /// The step size underflowed its floor, or shrank until `t + dt == t`
    /// and time could no longer advance.
    Diverged,
}

/// Work and outcome counters for one run. Nonlinear failures are convergence
/// failures retried at a smaller step; they are not rejected steps (those
/// are controller decisions on converged attempts).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub nonlinear_iters: u64,
    pub nonlinear_failures: u64,
    pub linear_iters: u64,
    pub evals: EvalCounts,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub t: f64,
    pub u: Vec<f64>,
    pub termination: Termination,
    pub stats: SolveStats,
    /// Step size in effect when the run stopped.
    pub dt_final: f64,
    pub events: Vec<EventRecord>,
}

/// Everything an observer learns about one attempted step.
#[derive(Debug, Clone, Copy)]
pub struct AttemptRecord<'a> {
    /// Index this attempt is working on: number of previously accepted steps.
    pub step_index: u64,
    pub t_old: f64,
    /// End of the attempt; for event-cut steps this is `t*`.
    pub t_new: f64,
    pub dt: f64,
    pub accepted: bool,
    /// Weighted error norm; absent for fixed-step runs and failed attempts.
    pub werr: Option<f64>,
    pub newton_iters: u64,
    pub linear_iters: u64,
    /// Events fired on this step (indices into the spec), smallest first.
    pub event_ids: &'a [usize],
    /// Accepted state after any event handler ran; `None` when rejected.
    pub u_new: Option<&'a [f64]>,
    /// Stage data of the accepted attempt, for trajectory recorders. On an
    /// event-cut step these belong to the uncut attempt, not the committed
    /// span.
    pub stages: Option<&'a StepStages>,
}

/// Passive per-attempt listener: monitors, trajectory recorders. Observers
/// must not influence the run; the loop hands them data, never control.
pub trait StepObserver {
    /// Called once before stepping with the initial condition.
    fn on_start(&mut self, _t0: f64, _u0: &[f64]) -> Result<()> {
        Ok(())
    }
    fn on_attempt(&mut self, rec: &AttemptRecord) -> Result<()>;
}

/// Optional attachments for a run.
#[derive(Default)]
pub struct SolveHooks<'a> {
    pub events: Option<&'a mut EventSpec>,
    pub observers: Vec<&'a mut dyn StepObserver>,
}

impl<'a> SolveHooks<'a> {
    pub fn none() -> Self {
        SolveHooks::default()
    }
}

/// Fallback shrink factor after a convergence failure when no controller is
/// attached (a controller supplies its own rejection factor).
const FAILURE_SHRINK: f64 = 0.5;
/// Step floor for failure retries in fixed-step runs.
const FIXED_DT_MIN: f64 = 1e-20;

/// Integrate `problem` from `opts.t0` with the initial state `u0`.
///
/// `adapt` enables error-controlled step adjustment; `None` integrates at
/// the fixed step `opts.dt0` (still shrinking on convergence failures).
/// Events, monitors, and trajectory recording attach through `hooks`; a run
/// with empty hooks takes exactly the same steps as one with observers
/// attached, and an event spec only alters the run when an event fires.
pub fn solve(
    problem: &Problem,
    scheme: &Scheme,
    u0: &[f64],
    opts: &SolveOptions,
    adapt: Option<AdaptConfig>,
    cfg: &StepperConfig,
    hooks: &mut SolveHooks,
) -> Result<SolveResult> {
    opts.validate()?;
    if u0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: problem.dim(),
            got: u0.len(),
        });
    }
    if let Some(a) = &adapt {
        a.validate(problem.dim())?;
    }

    let evals_at_entry = problem.eval_counts();
    let mut cfg = cfg.clone();
    cfg.fixed_step = adapt.is_none();
    let mut stepper = make_stepper(scheme, &cfg)?;

    if adapt.is_some() && !stepper.has_error_estimate() {
        return Err(Error::Config(format!(
            "scheme {} has no error estimate; run it at a fixed step or pick an embedded scheme",
            stepper.name()
        )));
    }
    if matches!(scheme, Scheme::Theta { theta, .. } if *theta < 1.0)
        && problem.equation_kind() == EquationKind::ImplicitDae
    {
        return Err(Error::Config(
            "theta methods with theta < 1 need state derivatives at the step start; \
             only backward Euler (theta = 1) integrates a DAE"
                .into(),
        ));
    }

    let mut controller = adapt.map(StepController::new);
    let (dt_min, dt_max) = match controller.as_ref() {
        Some(c) => (c.config().dt_min, c.config().dt_max),
        None => (FIXED_DT_MIN, f64::INFINITY),
    };

    let mut t = opts.t0;
    let mut u = u0.to_vec();
    let mut dt = opts.dt0;
    // Step size the controller wants once a truncated (event- or final-time-
    // cut) step is out of the way.
    let mut dt_stash: Option<f64> = None;

    let mut stats = SolveStats::default();
    let mut events_log: Vec<EventRecord> = Vec::new();
    let termination;

    let mut h_prev: Option<Vec<f64>> = match hooks.events.as_deref_mut() {
        Some(spec) => {
            let h0 = spec.eval(t, &u)?;
            spec.arm_initial(&h0);
            Some(h0)
        }
        None => None,
    };

    for obs in hooks.observers.iter_mut() {
        obs.on_start(t, &u)?;
    }

    let t_floor = time_resolution_floor(opts.max_time);

    loop {
        if t >= opts.max_time - t_floor {
            termination = Termination::ReachedMaxTime;
            break;
        }
        if stats.steps_accepted >= opts.max_steps as u64 {
            termination = Termination::ReachedMaxSteps;
            break;
        }

        // Final-time cut: land exactly on max_time, remembering the step the
        // controller actually wanted. Cutting engages slightly early (5%
        // stretch) so accumulated rounding can never leave a sliver step,
        // whose shifted stage residuals would drown in roundoff.
        let mut dt_attempt = dt;
        if opts.final_time == FinalTimePolicy::MatchStep
            && opts.max_time - t <= 1.05 * dt_attempt
        {
            if dt_stash.is_none() {
                dt_stash = Some(dt_attempt);
            }
            dt_attempt = opts.max_time - t;
        }

        let attempt = stepper.attempt(problem, t, &u, dt_attempt)?;
        stats.nonlinear_iters += attempt.newton_iters;
        stats.linear_iters += attempt.linear_iters;

        if !attempt.converged {
            stats.nonlinear_failures += 1;
            if let Some(max) = opts.max_nonlinear_failures {
                if stats.nonlinear_failures > max as u64 {
                    termination = Termination::Diverged;
                    break;
                }
            }
            stepper.reject();
            notify(hooks, &AttemptRecord {
                step_index: stats.steps_accepted,
                t_old: t,
                t_new: t + dt_attempt,
                dt: dt_attempt,
                accepted: false,
                werr: None,
                newton_iters: attempt.newton_iters,
                linear_iters: attempt.linear_iters,
                event_ids: &[],
                u_new: None,
                stages: None,
            })?;
            let shrink = controller
                .as_ref()
                .map(|c| c.config().reject_extra)
                .unwrap_or(FAILURE_SHRINK);
            // Resize from the attempted step; a stashed controller step no
            // longer applies at the new scale.
            dt = dt_attempt * shrink;
            dt_stash = None;
            if dt < dt_min || t + dt == t {
                termination = Termination::Diverged;
                break;
            }
            continue;
        }

        // Acceptance and the next step size.
        let mut werr = None;
        let mut dt_next = dt;
        let accepted = match controller.as_mut() {
            Some(ctl) => {
                let err = attempt
                    .err
                    .as_ref()
                    .expect("adaptive run requires an error estimate");
                let w = weighted_error_norm(
                    err,
                    &attempt.u_new,
                    attempt.u_alt.as_deref().unwrap_or(&attempt.u_new),
                    &ctl.config().tol,
                    ctl.config().norm,
                );
                werr = Some(w);
                let decision = ctl.decide(w, dt_attempt, stepper.control_order());
                dt_next = decision.next_dt;
                decision.accepted
            }
            None => {
                if attempt.u_new.iter().all(|x| x.is_finite()) {
                    true
                } else {
                    termination = Termination::Diverged;
                    break;
                }
            }
        };

        if !accepted {
            stats.steps_rejected += 1;
            stepper.reject();
            notify(hooks, &AttemptRecord {
                step_index: stats.steps_accepted,
                t_old: t,
                t_new: t + dt_attempt,
                dt: dt_attempt,
                accepted: false,
                werr,
                newton_iters: attempt.newton_iters,
                linear_iters: attempt.linear_iters,
                event_ids: &[],
                u_new: None,
                stages: None,
            })?;
            dt = dt_next;
            dt_stash = None;
            if dt < dt_min || t + dt == t {
                termination = Termination::Diverged;
                break;
            }
            continue;
        }

        let mut t_new = t + dt_attempt;
        let mut dt_taken = dt_attempt;
        let mut u_new = attempt.u_new;
        let mut fired: Vec<usize> = Vec::new();
        let mut terminate = false;

        // Event detection on the accepted span; a located event truncates
        // the step at t* with the interpolated state there.
        if let Some(spec) = hooks.events.as_deref_mut() {
            let h_next = spec.eval(t_new, &u_new)?;
            let crossings = scan_events(spec, h_prev.as_ref().unwrap(), &h_next);
            if crossings.is_empty() {
                spec.rearm(&h_next);
                h_prev = Some(h_next);
            } else {
                let interp =
                    stepper.interpolant(problem, t, dt_attempt, &u, &u_new, &attempt.stages)?;
                let sample = |theta: f64| -> Result<(f64, Vec<f64>)> {
                    Ok((t + theta * dt_attempt, interp.eval(theta)))
                };
                let h0 = h_prev.as_ref().unwrap();
                let mut located: Vec<EventRecord> = Vec::new();
                for &id in &crossings {
                    located.push(locate_event(
                        spec, &sample, t, t_new, id, h0[id], h_next[id],
                    )?);
                }
                located.sort_by(|x, y| x.t_star.total_cmp(&y.t_star));
                let t_star = located[0].t_star;
                let simultaneous = time_resolution_floor(t_star);
                let group: Vec<EventRecord> = located
                    .into_iter()
                    .filter(|r| (r.t_star - t_star).abs() <= simultaneous)
                    .collect();

                let mut u_star = group[0].u_star.clone();
                fired = group.iter().map(|r| r.event_id).collect();
                terminate = fired.iter().any(|&id| spec.terminate(id));
                spec.run_post_event(&fired, t_star, &mut u_star, true);
                for &id in &fired {
                    spec.disarm(id);
                }

                // Re-cut the step at t*; aim the next step at the original
                // endpoint so the controller's plan survives the detour.
                let dt_resync = t_new - t_star;
                if dt_stash.is_none() {
                    dt_stash = Some(dt_next);
                }
                t_new = t_star;
                dt_taken = t_star - t;
                u_new = u_star;
                dt_next = if dt_resync > time_resolution_floor(t_new) {
                    dt_resync
                } else {
                    dt_stash.take().unwrap()
                };

                events_log.extend(group);
                if let Some(ctl) = controller.as_mut() {
                    ctl.reset_history();
                }
                let h_star = spec.eval(t_new, &u_new)?;
                spec.rearm(&h_star);
                h_prev = Some(h_star);
            }
        }

        stats.steps_accepted += 1;
        stepper.commit(t, dt_taken, &u, &u_new, &attempt.stages);
        if !fired.is_empty() {
            // After commit so the handler's jump wipes every history entry,
            // including the step that was just recorded.
            stepper.discontinuity();
        }
        notify(hooks, &AttemptRecord {
            step_index: stats.steps_accepted - 1,
            t_old: t,
            t_new,
            dt: dt_taken,
            accepted: true,
            werr,
            newton_iters: attempt.newton_iters,
            linear_iters: attempt.linear_iters,
            event_ids: &fired,
            u_new: Some(&u_new),
            stages: Some(&attempt.stages),
        })?;

        let u_old = std::mem::replace(&mut u, u_new);
        let t_old = t;
        t = t_new;

        if terminate {
            termination = Termination::EventTerminated;
            break;
        }

        // Past the horizon: stop, interpolating back when asked to.
        if t >= opts.max_time - t_floor {
            if opts.final_time == FinalTimePolicy::Interpolate && t > opts.max_time {
                let interp = stepper.interpolant(
                    problem, t_old, dt_taken, &u_old, &u, &attempt.stages,
                )?;
                let theta = (opts.max_time - t_old) / dt_taken;
                u = interp.eval(theta);
                t = opts.max_time;
            }
            termination = Termination::ReachedMaxTime;
            break;
        }

        // Next step size: controller plan, then any stashed size once the
        // truncated step is behind us, capped by dt_max.
        if fired.is_empty() {
            if let Some(s) = dt_stash.take() {
                dt_next = s;
            }
        }
        dt = dt_next.min(dt_max);
        if dt < dt_min || t + dt == t {
            termination = Termination::Diverged;
            break;
        }
    }

    stats.evals = problem.eval_counts_since(evals_at_entry);
    Ok(SolveResult {
        t,
        u,
        termination,
        stats,
        dt_final: dt,
        events: events_log,
    })
}

fn notify(hooks: &mut SolveHooks, rec: &AttemptRecord) -> Result<()> {
    for obs in hooks.observers.iter_mut() {
        obs.on_attempt(rec)?;
    }
    Ok(())
}

/// Fixed-step convenience wrapper: no controller, no hooks.
pub fn solve_fixed(
    problem: &Problem,
    scheme: &Scheme,
    u0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    solve(
        problem,
        scheme,
        u0,
        opts,
        None,
        &StepperConfig::default(),
        &mut SolveHooks::none(),
    )
}

/// Adaptive convenience wrapper: controller attached, no hooks.
pub fn solve_adaptive(
    problem: &Problem,
    scheme: &Scheme,
    u0: &[f64],
    opts: &SolveOptions,
    adapt: AdaptConfig,
) -> Result<SolveResult> {
    solve(
        problem,
        scheme,
        u0,
        opts,
        Some(adapt),
        &StepperConfig::default(),
        &mut SolveHooks::none(),
    )
}
