//! Zero-crossing detection and event location inside accepted steps.
//!
//! The solve loop evaluates the indicator at both ends of each accepted step,
//! scans for sign changes, and locates each crossing on the step's dense
//! interpolant with the Anderson-Bjorck variant of false position. The step
//! is then re-cut at the earliest crossing, the post-event handler runs, and
//! a resynchronization step is scheduled to land back on the original step
//! endpoint.
//!
//! Re-arming: a component that fired stays disarmed until its indicator
//! leaves the `+-tol` band, so a state parked on the event manifold does not
//! retrigger every step.

use crate::error::{Error, Result};

/// Vector indicator `h(t, u)`; component `i` fires when it crosses zero in
/// the direction `direction[i]`.
pub type IndicatorFn = dyn Fn(f64, &[f64]) -> Vec<f64>;
/// Handler `(event_ids, t_star, u, forward)` run after location; may modify
/// the state in place.
pub type PostEventFn = dyn FnMut(&[usize], f64, &mut [f64], bool);

/// An event handler attached to a solve: one vector indicator plus
/// per-component direction, termination, and tolerance.
pub struct EventSpec {
    direction: Vec<i32>,
    terminate: Vec<bool>,
    tol: Vec<f64>,
    indicator: Box<IndicatorFn>,
    post_event: Option<Box<PostEventFn>>,
    /// Disarmed components wait for |h| > tol before they can fire again.
    armed: Vec<bool>,
}

impl EventSpec {
    /// One tolerance per component.
    pub fn new<F>(
        direction: Vec<i32>,
        terminate: Vec<bool>,
        tol: Vec<f64>,
        indicator: F,
    ) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + 'static,
    {
        let n = direction.len();
        if terminate.len() != n || tol.len() != n {
            return Err(Error::Config(
                "event direction/terminate/tol lengths disagree".into(),
            ));
        }
        if let Some(d) = direction.iter().find(|d| ![-1, 0, 1].contains(*d)) {
            return Err(Error::Config(format!(
                "event direction must be -1, 0, or +1, got {d}"
            )));
        }
        if tol.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Config("event tolerances must be positive".into()));
        }
        Ok(EventSpec {
            direction,
            terminate,
            tol,
            indicator: Box::new(indicator),
            post_event: None,
            armed: vec![true; n],
        })
    }

    /// Broadcast one tolerance across all components.
    pub fn with_scalar_tol<F>(
        direction: Vec<i32>,
        terminate: Vec<bool>,
        tol: f64,
        indicator: F,
    ) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + 'static,
    {
        let n = direction.len();
        Self::new(direction, terminate, vec![tol; n], indicator)
    }

    pub fn with_post_event<F>(mut self, f: F) -> Self
    where
        F: FnMut(&[usize], f64, &mut [f64], bool) + 'static,
    {
        self.post_event = Some(Box::new(f));
        self
    }

    pub fn nevents(&self) -> usize {
        self.direction.len()
    }

    pub fn terminate(&self, id: usize) -> bool {
        self.terminate[id]
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let h = (self.indicator)(t, u);
        if h.len() != self.nevents() {
            return Err(Error::DimensionMismatch {
                what: "event indicator",
                expected: self.nevents(),
                got: h.len(),
            });
        }
        for (i, x) in h.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    what: "event indicator",
                    index: i,
                });
            }
        }
        Ok(h)
    }

    /// Set the arming state from the initial indicator values: components
    /// already inside their tolerance band start disarmed.
    pub fn arm_initial(&mut self, h0: &[f64]) {
        for i in 0..self.nevents() {
            self.armed[i] = h0[i].abs() > self.tol[i];
        }
    }

    /// Re-arm components whose indicator has left the tolerance band.
    pub fn rearm(&mut self, h: &[f64]) {
        for i in 0..self.nevents() {
            if !self.armed[i] && h[i].abs() > self.tol[i] {
                self.armed[i] = true;
            }
        }
    }

    /// Disarm a component that just fired.
    pub fn disarm(&mut self, id: usize) {
        self.armed[id] = false;
    }

    pub fn run_post_event(&mut self, ids: &[usize], t_star: f64, u: &mut [f64], forward: bool) {
        if let Some(f) = &mut self.post_event {
            f(ids, t_star, u, forward);
        }
    }
}

/// A located zero crossing.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub event_id: usize,
    pub t_star: f64,
    pub u_star: Vec<f64>,
    pub h_value_at_t_star: f64,
    pub iterations: usize,
}

/// Indices of armed components whose sign change across the step matches
/// their declared direction.
pub fn scan_events(spec: &EventSpec, h_n: &[f64], h_next: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..spec.nevents() {
        if !spec.armed[i] {
            continue;
        }
        let a = h_n[i];
        let b = h_next[i];
        let falling = a > 0.0 && b <= 0.0;
        let rising = a < 0.0 && b >= 0.0;
        let hit = match spec.direction[i] {
            -1 => falling,
            1 => rising,
            _ => falling || rising,
        };
        if hit {
            out.push(i);
        }
    }
    out
}

/// Smallest bracket width worth resolving near time `t`.
pub fn time_resolution_floor(t: f64) -> f64 {
    4.0 * f64::EPSILON * t.abs().max(1.0)
}

const LOCATE_ITERATION_CAP: usize = 50;

/// Locate one crossing bracketed by the step, sampling the dense interpolant
/// `sample(theta) -> (t, u)` for `theta` in [0, 1].
///
/// Anderson-Bjorck false position: after two consecutive updates on the same
/// side, the retained endpoint's value is scaled by `m = 1 - f_c/f_b`
/// (halved when that is not positive), which restores superlinear
/// convergence on the flat side. Past the iteration cap the bracket is
/// finished off by bisection.
pub fn locate_event<S>(
    spec: &EventSpec,
    sample: S,
    t_n: f64,
    t_next: f64,
    event_id: usize,
    h_n: f64,
    h_next: f64,
) -> Result<EventRecord>
where
    S: Fn(f64) -> Result<(f64, Vec<f64>)>,
{
    let tol = spec.tol[event_id];
    let floor = time_resolution_floor(t_next);

    let mut a = 0.0f64;
    let mut b = 1.0f64;
    let mut fa = h_n;
    let mut fb = h_next;
    let width = |a: f64, b: f64| (b - a).abs() * (t_next - t_n).abs();

    // The endpoint evaluations may already satisfy the tolerance.
    if fb.abs() <= tol {
        let (t, u) = sample(b)?;
        return Ok(EventRecord {
            event_id,
            t_star: t,
            u_star: u,
            h_value_at_t_star: fb,
            iterations: 0,
        });
    }

    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let theta = if iterations <= LOCATE_ITERATION_CAP {
            // False position through (a, fa), (b, fb).
            let d = fb - fa;
            if d == 0.0 {
                0.5 * (a + b)
            } else {
                (a * fb - b * fa) / d
            }
        } else {
            0.5 * (a + b)
        };
        let theta = theta.clamp(a.min(b), a.max(b));
        let (t_c, u_c) = sample(theta)?;
        let hs = spec.eval(t_c, &u_c)?;
        let fc = hs[event_id];

        if fc.abs() <= tol || width(a, b) <= floor {
            return Ok(EventRecord {
                event_id,
                t_star: t_c,
                u_star: u_c,
                h_value_at_t_star: fc,
                iterations,
            });
        }

        // The retained endpoint's value is rescaled so repeat retentions
        // cannot stall the secant on one side.
        if fa * fc < 0.0 {
            // Root stays in [a, theta]; b is replaced, a is retained.
            let m = 1.0 - fc / fb;
            fa *= if m > 0.0 { m } else { 0.5 };
            b = theta;
            fb = fc;
        } else {
            // Root stays in [theta, b]; a is replaced, b is retained.
            let m = 1.0 - fc / fa;
            fb *= if m > 0.0 { m } else { 0.5 };
            a = theta;
            fa = fc;
        }

        if iterations > 2 * LOCATE_ITERATION_CAP {
            // Bisection on a valid bracket halves every pass, so this is
            // unreachable unless the interpolant itself is inconsistent.
            return Err(Error::Config(
                "event location failed to converge on a bracketed sign change".into(),
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn height_spec() -> EventSpec {
        EventSpec::with_scalar_tol(vec![-1], vec![false], 1e-9, |_t, u: &[f64]| vec![u[0]])
            .unwrap()
    }

    #[test]
    fn direction_filter() {
        let falling = height_spec();
        assert_eq!(scan_events(&falling, &[0.5], &[-0.2]), vec![0]);
        let rising =
            EventSpec::with_scalar_tol(vec![1], vec![false], 1e-9, |_t, u: &[f64]| vec![u[0]])
                .unwrap();
        assert_eq!(scan_events(&rising, &[0.5], &[-0.2]), Vec::<usize>::new());
        assert_eq!(scan_events(&rising, &[-0.5], &[0.2]), vec![0]);
        let both =
            EventSpec::with_scalar_tol(vec![0], vec![false], 1e-9, |_t, u: &[f64]| vec![u[0]])
                .unwrap();
        assert_eq!(scan_events(&both, &[0.5], &[-0.2]), vec![0]);
        assert_eq!(scan_events(&both, &[-0.5], &[0.2]), vec![0]);
    }

    #[test]
    fn disarmed_component_not_redetected() {
        let mut spec = height_spec();
        spec.arm_initial(&[0.0]);
        // Sitting exactly on the boundary: disarmed, no detection.
        assert_eq!(scan_events(&spec, &[0.0], &[-0.2]), Vec::<usize>::new());
        // Once the indicator leaves the band it re-arms.
        spec.rearm(&[0.4]);
        assert_eq!(scan_events(&spec, &[0.4], &[-0.2]), vec![0]);
    }

    #[test]
    fn linear_indicator_located_in_one_iteration() {
        // h(t) = 1 - 2 theta on a step [0, 1]: root at theta = 0.5.
        let spec = height_spec();
        let sample = |theta: f64| Ok((theta, vec![1.0 - 2.0 * theta]));
        let rec = locate_event(&spec, sample, 0.0, 1.0, 0, 1.0, -1.0).unwrap();
        assert_eq!(rec.iterations, 1);
        assert!((rec.t_star - 0.5).abs() <= 1e-12);
        assert!(rec.h_value_at_t_star.abs() <= 1e-9);
    }

    #[test]
    fn quadratic_kinematics_bracket() {
        // Ball height 10 - 4.9 t^2 on a step [1.2, 1.6] that brackets the
        // impact at t* = sqrt(10/4.9) = 10/7.
        let spec = height_spec();
        let (t0, t1) = (1.2f64, 1.6f64);
        let h = |t: f64| 10.0 - 4.9 * t * t;
        let sample = |theta: f64| {
            let t = t0 + theta * (t1 - t0);
            Ok((t, vec![h(t)]))
        };
        let rec = locate_event(&spec, sample, t0, t1, 0, h(t0), h(t1)).unwrap();
        assert!((rec.t_star - 10.0 / 7.0).abs() <= 1e-6);
        assert!(rec.iterations <= 10, "took {}", rec.iterations);
    }

    #[test]
    fn flat_side_still_converges() {
        // Strong curvature: plain false position crawls from the flat side;
        // the Anderson-Bjorck rescale must keep this in a few dozen
        // iterations even with a tight tolerance.
        let spec =
            EventSpec::with_scalar_tol(vec![0], vec![false], 1e-13, |_t, u: &[f64]| vec![u[0]])
                .unwrap();
        let f = |t: f64| t * t * t * t * t - 0.1;
        let sample = |theta: f64| Ok((theta, vec![f(theta)]));
        let rec = locate_event(&spec, sample, 0.0, 1.0, 0, f(0.0), f(1.0)).unwrap();
        let root = 0.1f64.powf(0.2);
        assert!((rec.t_star - root).abs() <= 1e-10, "t* = {}", rec.t_star);
        assert!(rec.iterations <= LOCATE_ITERATION_CAP, "took {}", rec.iterations);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(
            EventSpec::with_scalar_tol(vec![2], vec![false], 1e-9, |_t, _u: &[f64]| vec![0.0])
                .is_err()
        );
        assert!(
            EventSpec::with_scalar_tol(vec![0], vec![false], 0.0, |_t, _u: &[f64]| vec![0.0])
                .is_err()
        );
        assert!(EventSpec::new(
            vec![0, 1],
            vec![false],
            vec![1e-9, 1e-9],
            |_t, _u: &[f64]| vec![0.0, 0.0]
        )
        .is_err());
    }

    #[test]
    fn post_event_handler_mutates_state() {
        let mut spec = height_spec().with_post_event(|ids, _t, u, forward| {
            assert_eq!(ids, &[0]);
            assert!(forward);
            u[1] = -0.9 * u[1];
        });
        let mut u = vec![0.0, -14.0];
        spec.run_post_event(&[0], 10.0 / 7.0, &mut u, true);
        assert_eq!(u[1], 12.6);
    }
}
