//! Step-size control: weighted local error norms and the accept/reject
//! controller.
//!
//! One code path serves both controllers. The basic controller is the
//! digital filter with coefficients (1, 0, 0); the filtered controller keeps
//! a one-step history of the error and step ratio. Both produce
//! `factor = safety * werr^(-b1/k) * werr_prev^(-b2/k) * (dt/dt_prev)^(-a2)`
//! with `k = control_order + 1`, clipped to the configured range; rejection
//! applies one extra shrink factor and clears the history, so the filter
//! restarts clean.

use crate::error::{Error, Result};
use crate::options::ToleranceSpec;

/// How componentwise weighted errors are folded into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormType {
    /// Largest weighted component.
    #[default]
    Infinity,
    /// 2-norm divided by sqrt(n): an RMS average.
    Rms,
}

/// `|| err_i / (atol_i + rtol * max(|u_i|, |u_alt_i|)) ||`.
///
/// `u` and `u_alt` are the two solutions whose difference (or scaled
/// difference) is `err`; taking the larger magnitude keeps the weight stable
/// when one of them overshoots.
pub fn weighted_error_norm(
    err: &[f64],
    u: &[f64],
    u_alt: &[f64],
    tol: &ToleranceSpec,
    norm: NormType,
) -> f64 {
    let n = err.len();
    match norm {
        NormType::Infinity => {
            let mut worst = 0.0f64;
            for i in 0..n {
                let w = tol.atol.at(i) + tol.rtol * u[i].abs().max(u_alt[i].abs());
                worst = worst.max((err[i] / w).abs());
            }
            worst
        }
        NormType::Rms => {
            let mut acc = 0.0f64;
            for i in 0..n {
                let w = tol.atol.at(i) + tol.rtol * u[i].abs().max(u_alt[i].abs());
                let e = err[i] / w;
                acc += e * e;
            }
            (acc / n as f64).sqrt()
        }
    }
}

/// Controller flavor; both share the factor formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// Deadbeat proportional control: coefficients (1, 0, 0).
    Basic,
    /// Digital filter with error exponents `beta1`, `beta2` and step-ratio
    /// exponent `alpha2`.
    Dsp { beta1: f64, beta2: f64, alpha2: f64 },
}

impl Controller {
    /// The H211b filter: a robust smoothing default.
    pub fn h211b() -> Self {
        Controller::Dsp {
            beta1: 0.25,
            beta2: 0.25,
            alpha2: 0.25,
        }
    }

    fn coefficients(self) -> (f64, f64, f64) {
        match self {
            Controller::Basic => (1.0, 0.0, 0.0),
            Controller::Dsp {
                beta1,
                beta2,
                alpha2,
            } => (beta1, beta2, alpha2),
        }
    }
}

/// Adaptive-stepping configuration.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub controller: Controller,
    pub tol: ToleranceSpec,
    pub norm: NormType,
    /// Target margin below the werr = 1 acceptance boundary.
    pub safety: f64,
    /// Extra shrink applied on top of the controller factor after a
    /// rejection.
    pub reject_extra: f64,
    /// Fastest allowed decrease of the step per attempt.
    pub clip_low: f64,
    /// Fastest allowed increase of the step per attempt.
    pub clip_high: f64,
    /// A step below this is treated as divergence.
    pub dt_min: f64,
    pub dt_max: f64,
}

impl AdaptConfig {
    pub fn new(tol: ToleranceSpec) -> Self {
        AdaptConfig {
            controller: Controller::Basic,
            tol,
            norm: NormType::Infinity,
            safety: 0.9,
            reject_extra: 0.5,
            clip_low: 0.1,
            clip_high: 10.0,
            dt_min: 1e-20,
            dt_max: f64::INFINITY,
        }
    }

    pub fn with_controller(mut self, c: Controller) -> Self {
        self.controller = c;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.tol.validate(dim)?;
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Config(format!(
                "safety factor must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if !(self.reject_extra > 0.0 && self.reject_extra <= 1.0) {
            return Err(Error::Config(format!(
                "rejection factor must lie in (0, 1], got {}",
                self.reject_extra
            )));
        }
        if !(self.clip_low > 0.0 && self.clip_low < 1.0 && self.clip_high > 1.0) {
            return Err(Error::Config(format!(
                "clips must satisfy 0 < low < 1 < high, got {} and {}",
                self.clip_low, self.clip_high
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_max > self.dt_min) {
            return Err(Error::Config("dt bounds must be positive and ordered".into()));
        }
        Ok(())
    }
}

/// Outcome of one attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accepted: bool,
    /// Step for the next attempt (retry size when rejected).
    pub next_dt: f64,
    /// `next_dt / dt` before the `dt_max` cap.
    pub ratio: f64,
}

/// The controller and its one-step history.
#[derive(Debug, Clone)]
pub struct StepController {
    cfg: AdaptConfig,
    werr_prev: Option<f64>,
    dt_prev: Option<f64>,
}

impl StepController {
    pub fn new(cfg: AdaptConfig) -> Self {
        StepController {
            cfg,
            werr_prev: None,
            dt_prev: None,
        }
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.cfg
    }

    /// Clear the filter history (used when an event re-cuts a step: the
    /// history no longer describes consecutive steps).
    pub fn reset_history(&mut self) {
        self.werr_prev = None;
        self.dt_prev = None;
    }

    /// The raw controller factor for an error of `werr` at step `dt`.
    fn factor(&self, werr: f64, dt: f64, control_order: usize) -> f64 {
        let cfg = &self.cfg;
        if !werr.is_finite() {
            return cfg.clip_low;
        }
        if werr == 0.0 {
            return cfg.clip_high;
        }
        let k = (control_order + 1) as f64;
        let (b1, b2, a2) = cfg.controller.coefficients();
        let mut factor = cfg.safety * werr.powf(-b1 / k);
        if b2 != 0.0 {
            if let Some(wp) = self.werr_prev {
                if wp > 0.0 {
                    factor *= wp.powf(-b2 / k);
                }
            }
        }
        if a2 != 0.0 {
            if let Some(dtp) = self.dt_prev {
                factor *= (dt / dtp).powf(-a2);
            }
        }
        if !factor.is_finite() {
            return cfg.clip_low;
        }
        factor.clamp(cfg.clip_low, cfg.clip_high)
    }

    /// Accept or reject the attempt and size the next step.
    ///
    /// Acceptance is exactly `werr <= 1` (non-finite rejects). The returned
    /// ratio stays within `[clip_low * reject_extra, clip_high]`.
    pub fn decide(&mut self, werr: f64, dt: f64, control_order: usize) -> Decision {
        let accepted = werr.is_finite() && werr <= 1.0;
        let mut ratio = self.factor(werr, dt, control_order);
        if accepted {
            self.werr_prev = Some(werr);
            self.dt_prev = Some(dt);
        } else {
            ratio *= self.cfg.reject_extra;
            self.reset_history();
        }
        let next_dt = (ratio * dt).min(self.cfg.dt_max);
        Decision {
            accepted,
            next_dt,
            ratio,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basic_cfg() -> AdaptConfig {
        AdaptConfig::new(ToleranceSpec::new(1e-6, 1e-6))
    }

    #[test]
    fn infinity_norm_single_component() {
        // err 0.5e-6 against weight atol 0 + rtol 1e-6 * 1 = 1e-6.
        let tol = ToleranceSpec::new(1e-6, 0.0);
        let w = weighted_error_norm(&[0.5e-6], &[1.0], &[1.0], &tol, NormType::Infinity);
        assert!((w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rms_is_two_norm_over_sqrt_n() {
        let tol = ToleranceSpec::new(0.0, 1.0);
        let err = [3.0, 4.0, 0.0, 0.0];
        let z = [0.0; 4];
        let inf = weighted_error_norm(&err, &z, &z, &tol, NormType::Infinity);
        let rms = weighted_error_norm(&err, &z, &z, &tol, NormType::Rms);
        assert_eq!(inf, 4.0);
        assert!((rms - 5.0 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn vector_atol_floors_each_component() {
        // Per-component floors: the same raw error weighs 100x more against
        // the 1e-4 floor than against the 1e-2 floor.
        let tol = ToleranceSpec::with_vector_atol(0.0, vec![1e-2, 1e-1, 1e-4]);
        let z = [0.0; 3];
        let w = weighted_error_norm(&[1e-4, 1e-4, 1e-4], &z, &z, &tol, NormType::Infinity);
        assert!((w - 1.0).abs() < 1e-12, "dominated by the tightest floor");
    }

    #[test]
    fn larger_magnitude_sets_the_weight() {
        let tol = ToleranceSpec::new(1e-3, 0.0);
        let w = weighted_error_norm(&[1e-3], &[1.0], &[2.0], &tol, NormType::Infinity);
        assert!((w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn proportional_factor_closed_form() {
        let mut ctl = StepController::new(basic_cfg());
        // werr 16, control order 1: factor = 0.9 * 16^(-1/2) = 0.225;
        // rejected, so the extra 0.5 gives ratio 0.1125.
        let d = ctl.decide(16.0, 0.1, 1);
        assert!(!d.accepted);
        assert!((d.ratio - 0.1125).abs() < 1e-15);
        // werr 0.9^2 at equilibrium: factor exactly 1.
        let d = ctl.decide(0.81, 0.1, 1);
        assert!(d.accepted);
        assert!((d.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clips_bound_the_ratio() {
        let mut ctl = StepController::new(basic_cfg());
        let d = ctl.decide(1e12, 1.0, 1);
        assert_eq!(d.ratio, 0.1 * 0.5);
        let d = ctl.decide(0.0, 1.0, 1);
        assert!(d.accepted);
        assert_eq!(d.ratio, 10.0);
        let d = ctl.decide(f64::NAN, 1.0, 1);
        assert!(!d.accepted);
        assert_eq!(d.ratio, 0.1 * 0.5);
    }

    #[test]
    fn basic_is_the_degenerate_filter_bitwise() {
        let mut a = StepController::new(basic_cfg());
        let mut b = StepController::new(basic_cfg().with_controller(Controller::Dsp {
            beta1: 1.0,
            beta2: 0.0,
            alpha2: 0.0,
        }));
        let werrs = [3.0, 0.4, 0.9, 1.7, 0.2, 0.99, 1.0];
        let mut dta = 0.05f64;
        let mut dtb = 0.05f64;
        for (i, &w) in werrs.iter().enumerate() {
            let da = a.decide(w, dta, 2 + i % 3);
            let db = b.decide(w, dtb, 2 + i % 3);
            assert_eq!(da, db, "decision {i} diverged");
            dta = da.next_dt;
            dtb = db.next_dt;
        }
    }

    #[test]
    fn filter_history_engages_on_second_step() {
        let cfg = basic_cfg().with_controller(Controller::h211b());
        let mut filt = StepController::new(cfg);
        // First accepted step: no history, only the beta1 term participates.
        let d1 = filt.decide(0.5, 0.1, 2);
        let expect1 = 0.9 * 0.5f64.powf(-0.25 / 3.0);
        assert!((d1.ratio - expect1).abs() < 1e-14);
        // Second step: history multiplies in werr_prev and the step ratio.
        let d2 = filt.decide(0.6, d1.next_dt, 2);
        let expect2 = (0.9 * 0.6f64.powf(-0.25 / 3.0))
            * 0.5f64.powf(-0.25 / 3.0)
            * (d1.next_dt / 0.1).powf(-0.25);
        assert!((d2.ratio - expect2).abs() < 1e-14);
    }

    #[test]
    fn rejection_clears_filter_history() {
        let cfg = basic_cfg().with_controller(Controller::h211b());
        let mut ctl = StepController::new(cfg);
        ctl.decide(0.5, 0.1, 2);
        ctl.decide(5.0, 0.1, 2); // rejected: history cleared
        let d = ctl.decide(0.5, 0.1, 2);
        // Identical to a first step: only the beta1 term participates.
        let expect = 0.9 * 0.5f64.powf(-0.25 / 3.0);
        assert!((d.ratio - expect).abs() < 1e-14);
    }

    #[test]
    fn controller_drives_werr_to_safety_power() {
        // Model problem: werr proportional to dt^k. A fixed point of the
        // basic controller satisfies werr = safety^k.
        for order in [1usize, 2, 4] {
            let k = (order + 1) as f64;
            let mut ctl = StepController::new(basic_cfg());
            let mut dt = 0.3f64;
            let cal = 2.0; // werr at dt = 1
            let mut werr = 0.0;
            for _ in 0..200 {
                werr = cal * dt.powf(k);
                let d = ctl.decide(werr, dt, order);
                dt = d.next_dt;
            }
            let target = 0.9f64.powf(k);
            assert!(
                (werr - target).abs() <= 1e-6 * target,
                "order {order}: werr {werr} vs {target}"
            );
        }
    }

    proptest! {
        #[test]
        fn ratio_always_within_published_bounds(
            werrs in proptest::collection::vec(0.0f64..1e6, 1..40),
            order in 1usize..6,
        ) {
            let mut ctl = StepController::new(basic_cfg());
            let mut dt = 0.1f64;
            for w in werrs {
                let d = ctl.decide(w, dt, order);
                prop_assert!(d.ratio >= 0.05 - 1e-15);
                prop_assert!(d.ratio <= 10.0 + 1e-15);
                if d.accepted {
                    prop_assert!(w <= 1.0);
                } else {
                    prop_assert!(!(w <= 1.0));
                }
                dt = d.next_dt;
            }
        }

        #[test]
        fn filtered_controller_also_bounded(
            werrs in proptest::collection::vec(0.0f64..1e6, 1..40),
        ) {
            let cfg = basic_cfg().with_controller(Controller::h211b());
            let mut ctl = StepController::new(cfg);
            let mut dt = 0.1f64;
            for w in werrs {
                let d = ctl.decide(w, dt, 2);
                prop_assert!(d.ratio >= 0.05 - 1e-15);
                prop_assert!(d.ratio <= 10.0 + 1e-15);
                dt = d.next_dt;
            }
        }
    }
}
