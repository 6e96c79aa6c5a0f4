//! Variable-step BDF up to order 6.
//!
//! The derivative weights are regenerated from the actual node times every
//! step, so no fixed-ratio assumptions are baked in. Order ramps up from 1
//! as history fills: adaptive runs simply climb one order per accepted step
//! (the controller keeps startup steps small); fixed-step runs instead
//! replace their first macro step with [`STARTUP_SUBSTEPS`] internal
//! substeps of `dt/STARTUP_SUBSTEPS`, ramping order across them, so the
//! startup error stays far below the target order's per-step error. The
//! refined history is adopted only if that exact step commits; any re-cut
//! (event, truncation) discards it.
//!
//! The error estimate compares against the Lagrange predictor through the
//! previous nodes: `err = (u1 - predictor)/(q + 1)`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::newton::{self, NewtonParams};
use crate::problem::Problem;
use crate::tableaux::bdf_weights;

use super::{StepAttempt, StepStages, Stepper};

pub const MAX_ORDER: usize = 6;
pub const STARTUP_SUBSTEPS: usize = 64;
/// History entries kept: enough nodes for order 6.
const HISTORY_CAP: usize = MAX_ORDER;

pub struct BdfStepper {
    target_order: usize,
    newton: NewtonParams,
    fixed_startup: bool,
    /// Ramp order; the attempt may use less when history is still short.
    current_order: usize,
    /// Past accepted nodes `(t, u)`, most recent first, head excluded.
    hist: VecDeque<(f64, Vec<f64>)>,
    /// Startup refinement produced by the last attempt, adopted on commit:
    /// `(endpoint, nodes)`.
    pending: Option<(f64, VecDeque<(f64, Vec<f64>)>)>,
    consecutive_rejects: usize,
}

/// Evaluate the interpolating polynomial through `nodes` at `t_eval`.
fn lagrange_extrapolate(nodes: &[(f64, &[f64])], t_eval: f64) -> Vec<f64> {
    let n = nodes[0].1.len();
    let mut out = vec![0.0; n];
    for (j, (tj, uj)) in nodes.iter().enumerate() {
        let mut w = 1.0;
        for (k, (tk, _)) in nodes.iter().enumerate() {
            if k != j {
                w *= (t_eval - tk) / (tj - tk);
            }
        }
        for (o, &v) in out.iter_mut().zip(*uj) {
            *o += w * v;
        }
    }
    out
}

struct StageOut {
    x: Vec<f64>,
    iterations: u64,
    converged: bool,
}

impl BdfStepper {
    pub fn new(order: usize, newton: NewtonParams, fixed_startup: bool) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Config(format!(
                "BDF order must lie in 1..={MAX_ORDER}, got {order}"
            )));
        }
        Ok(BdfStepper {
            target_order: order,
            newton,
            fixed_startup,
            current_order: 1,
            hist: VecDeque::new(),
            pending: None,
            consecutive_rejects: 0,
        })
    }

    fn available_order(&self) -> usize {
        self.current_order.min(self.hist.len() + 1)
    }

    /// Solve the implicit step to `t_new` given the head `(t, u)` and the
    /// trailing history, at order `q`.
    fn stage(
        &self,
        p: &Problem,
        t: f64,
        u: &[f64],
        t_new: f64,
        q: usize,
        hist: &VecDeque<(f64, Vec<f64>)>,
    ) -> Result<StageOut> {
        let mut times = Vec::with_capacity(q + 1);
        times.push(t_new);
        times.push(t);
        for k in 0..q - 1 {
            times.push(hist[k].0);
        }
        let alpha = bdf_weights(&times);
        let shift = alpha[0];

        // Fixed part of the derivative: alpha_1 u_n + sum alpha_k u_{n-k+1}.
        let n = u.len();
        let mut fixed = vec![0.0; n];
        for (f, &ui) in fixed.iter_mut().zip(u) {
            *f = alpha[1] * ui;
        }
        for k in 0..q - 1 {
            let a = alpha[k + 2];
            for (f, &ui) in fixed.iter_mut().zip(&hist[k].1) {
                *f += a * ui;
            }
        }

        // Predictor: extrapolate the known nodes.
        let mut nodes: Vec<(f64, &[f64])> = Vec::with_capacity(q + 1);
        nodes.push((t, u));
        for k in 0..q.min(hist.len()) {
            nodes.push((hist[k].0, &hist[k].1));
        }
        let mut x = lagrange_extrapolate(&nodes, t_new);
        if x.iter().any(|v| !v.is_finite()) {
            x = u.to_vec();
        }

        let report = newton::solve(
            &mut x,
            |x| {
                let udot: Vec<f64> = x
                    .iter()
                    .zip(&fixed)
                    .map(|(&xi, &fi)| shift * xi + fi)
                    .collect();
                p.implicit_residual(t_new, x, &udot, true)
            },
            |x| {
                let udot: Vec<f64> = x
                    .iter()
                    .zip(&fixed)
                    .map(|(&xi, &fi)| shift * xi + fi)
                    .collect();
                p.implicit_jacobian(t_new, x, &udot, shift, true)
            },
            &self.newton,
        )?;
        Ok(StageOut {
            x,
            iterations: report.iterations as u64,
            converged: report.converged,
        })
    }

    /// First fixed-step macro step: refine internally and remember the
    /// generated history for adoption on commit.
    fn startup_attempt(
        &mut self,
        p: &Problem,
        t: f64,
        u: &[f64],
        dt: f64,
    ) -> Result<StepAttempt> {
        let h = dt / STARTUP_SUBSTEPS as f64;
        let mut local: VecDeque<(f64, Vec<f64>)> = VecDeque::new();
        let mut cur_u = u.to_vec();
        let mut iters = 0u64;

        for m in 0..STARTUP_SUBSTEPS {
            let t0 = t + m as f64 * h;
            let t1 = t + (m + 1) as f64 * h;
            let q = self.target_order.min(local.len() + 1);
            let out = self.stage(p, t0, &cur_u, t1, q, &local)?;
            iters += out.iterations;
            if !out.converged {
                return Ok(StepAttempt::failed(iters, iters));
            }
            local.push_front((t0, cur_u));
            local.truncate(HISTORY_CAP);
            cur_u = out.x;
        }

        self.pending = Some((t + dt, local));
        Ok(StepAttempt {
            u_new: cur_u,
            err: None,
            u_alt: None,
            stages: StepStages::default(),
            newton_iters: iters,
            linear_iters: iters,
            converged: true,
        })
    }
}

impl Stepper for BdfStepper {
    fn name(&self) -> String {
        format!("bdf{}", self.target_order)
    }

    fn order(&self) -> usize {
        self.target_order
    }

    fn control_order(&self) -> usize {
        self.available_order()
    }

    fn has_error_estimate(&self) -> bool {
        true
    }

    fn attempt(&mut self, p: &Problem, t: f64, u: &[f64], dt: f64) -> Result<StepAttempt> {
        self.pending = None;
        if self.fixed_startup && self.target_order > 1 && self.hist.is_empty() {
            return self.startup_attempt(p, t, u, dt);
        }

        let q = self.available_order();
        let t_new = t + dt;
        let out = self.stage(p, t, u, t_new, q, &self.hist)?;
        if !out.converged {
            return Ok(StepAttempt::failed(out.iterations, out.iterations));
        }

        let mut nodes: Vec<(f64, &[f64])> = Vec::with_capacity(q + 1);
        nodes.push((t, u));
        for k in 0..q.min(self.hist.len()) {
            nodes.push((self.hist[k].0, &self.hist[k].1));
        }
        let pred = lagrange_extrapolate(&nodes, t_new);
        let scale = 1.0 / (q as f64 + 1.0);
        let err: Vec<f64> = out
            .x
            .iter()
            .zip(&pred)
            .map(|(&a, &b)| (a - b) * scale)
            .collect();

        Ok(StepAttempt {
            u_new: out.x,
            err: Some(err),
            u_alt: Some(pred),
            stages: StepStages::default(),
            newton_iters: out.iterations,
            linear_iters: out.iterations,
            converged: true,
        })
    }

    fn commit(&mut self, t: f64, dt: f64, u_old: &[f64], _u_new: &[f64], _stages: &StepStages) {
        self.consecutive_rejects = 0;
        if let Some((t_end, nodes)) = self.pending.take() {
            if t + dt == t_end {
                self.hist = nodes;
                self.current_order = self.target_order;
                return;
            }
            // The startup step was re-cut; its internal nodes do not lead to
            // the committed endpoint, so fall back to the plain ramp.
        }
        self.hist.push_front((t, u_old.to_vec()));
        self.hist.truncate(HISTORY_CAP);
        self.current_order = (self.current_order + 1).min(self.target_order);
    }

    fn reject(&mut self) {
        self.pending = None;
        self.consecutive_rejects += 1;
        // First response to a rejection is the controller shrinking dt;
        // repeated rejections at the same point also drop the order.
        if self.consecutive_rejects >= 2 {
            self.current_order = (self.current_order - 1).max(1);
        }
    }

    fn discontinuity(&mut self) {
        self.hist.clear();
        self.pending = None;
        self.current_order = 1;
    }
}
