//! Fixed-step RK4 driver for a continuous flow with a zero-order-held input
//! that is refreshed either every step or by the static trigger.
//!
//! The flow sees only the held decision signal; the trigger is evaluated at
//! step ends (optionally refined by bisection inside the step).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::trigger::{trigger_margin, EventLog, TriggerConfig, TriggerState};

/// A flow `dx/dt = f(t, x, held)` with a decision signal `z(t, x)`.
pub(crate) trait HeldFlow {
    fn rhs(&self, t: f64, x: &DVector<f64>, held: &DVector<f64>) -> DVector<f64>;
    fn decision(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    /// Rejects states that may not be continued from.
    fn check(&self, t: f64, x: &DVector<f64>) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DriveConfig {
    pub h: f64,
    pub t_end: f64,
    /// `None` refreshes the hold every step (continuous law at step
    /// resolution).
    pub trigger: Option<TriggerConfig>,
    pub refine_events: bool,
}

/// What the driver reports after each accepted step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub index: usize,
    pub t: f64,
    /// Trigger margin at `t` before any event was processed (NaN for
    /// continuous laws).
    pub margin_before: f64,
    /// Trigger margin at `t` after the event, if one fired.
    pub margin_after: f64,
    /// Events stamped inside this step (0 or more with refinement).
    pub events: usize,
    /// `‖held − z‖` after processing.
    pub error_norm: f64,
}

pub(crate) struct Snapshot<'a> {
    pub t: f64,
    pub x: &'a DVector<f64>,
    pub held: &'a DVector<f64>,
    pub margin: f64,
}

const REFINE_REL_WINDOW: f64 = 1e-10;

fn rk4<F: HeldFlow + ?Sized>(flow: &F, t: f64, x: &DVector<f64>, held: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = flow.rhs(t, x, held);
    let k2 = flow.rhs(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)), held);
    let k3 = flow.rhs(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)), held);
    let k4 = flow.rhs(t + dt, &(x + &k3 * dt), held);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

pub(crate) fn step_count(h: f64, t_end: f64) -> usize {
    if t_end <= 0.0 {
        0
    } else {
        (t_end / h - 1e-9).ceil() as usize
    }
}

/// Integrates from `t = 0`. `record` sees the initial state and every step
/// end; `on_step` sees per-step trigger bookkeeping.
pub(crate) fn drive<F, R, S>(
    flow: &F,
    x0: DVector<f64>,
    cfg: DriveConfig,
    log: &mut EventLog,
    mut record: R,
    mut on_step: S,
) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: HeldFlow + ?Sized,
    R: FnMut(usize, &Snapshot<'_>),
    S: FnMut(&StepInfo),
{
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::invalid("h", "step must be positive"));
    }
    flow.check(0.0, &x0)?;
    let mut x = x0;
    let z0 = flow.decision(0.0, &x);
    let mut trig = TriggerState::new(z0.clone(), 0.0);
    // t₀ = 0 is always an event: the hold starts from z(0).
    trig.fire(&z0, 0.0, log)?;
    let margin0 = cfg.trigger.map_or(f64::NAN, |c| trigger_margin(&z0, &trig, &c));
    record(
        0,
        &Snapshot {
            t: 0.0,
            x: &x,
            held: &trig.held_z,
            margin: margin0,
        },
    );

    let steps = step_count(cfg.h, cfg.t_end);
    for k in 0..steps {
        let t0 = k as f64 * cfg.h;
        let target = ((k + 1) as f64 * cfg.h).min(cfg.t_end);
        let mut t = t0;
        let mut events = 0;
        let mut margin_before = f64::NAN;
        let mut margin_after = f64::NAN;

        let z = loop {
            let dt = target - t;
            let x_next = rk4(flow, t, &x, &trig.held_z, dt);
            flow.check(target, &x_next)?;
            let z_next = flow.decision(target, &x_next);
            let Some(tc) = cfg.trigger else {
                x = x_next;
                t = target;
                trig.held_z.copy_from(&z_next);
                trig.last_event_time = target;
                break z_next;
            };
            let m = trigger_margin(&z_next, &trig, &tc);
            if m >= 0.0 {
                x = x_next;
                t = target;
                margin_before = m;
                break z_next;
            }
            if !cfg.refine_events {
                x = x_next;
                t = target;
                margin_before = m;
                trig.fire(&z_next, t, log)?;
                events += 1;
                margin_after = trigger_margin(&z_next, &trig, &tc);
                break z_next;
            }
            // Smallest sub-step with a negative margin.
            let (mut lo, mut hi) = (0.0, dt);
            let window = REFINE_REL_WINDOW * cfg.h;
            while hi - lo > window {
                let mid = 0.5 * (lo + hi);
                let xm = rk4(flow, t, &x, &trig.held_z, mid);
                let zm = flow.decision(t + mid, &xm);
                if trigger_margin(&zm, &trig, &tc) < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let te = t + hi;
            let xe = rk4(flow, t, &x, &trig.held_z, hi);
            flow.check(te, &xe)?;
            let ze = flow.decision(te, &xe);
            if hi >= dt || target - te <= window {
                // Crossing sits at the step end.
                x = x_next;
                t = target;
                margin_before = m;
                trig.fire(&z_next, t, log)?;
                events += 1;
                margin_after = trigger_margin(&z_next, &trig, &tc);
                break z_next;
            }
            x = xe;
            t = te;
            trig.fire(&ze, te, log)?;
            events += 1;
        };

        let error_norm = (&trig.held_z - &z).norm();
        let margin_now = cfg.trigger.map_or(f64::NAN, |c| trigger_margin(&z, &trig, &c));
        if cfg.trigger.is_some() && events > 0 && margin_after.is_nan() {
            margin_after = margin_now;
        }
        if cfg.trigger.is_some() && margin_before.is_nan() {
            margin_before = margin_now;
        }
        on_step(&StepInfo {
            index: k + 1,
            t,
            margin_before,
            margin_after,
            events,
            error_norm,
        });
        record(
            k + 1,
            &Snapshot {
                t,
                x: &x,
                held: &trig.held_z,
                margin: margin_now,
            },
        );
    }
    Ok((x, trig.held_z))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// dx/dt = −held, z = x: the scalar ZOH loop with a closed form.
    struct Scalar;

    impl HeldFlow for Scalar {
        fn rhs(&self, _t: f64, _x: &DVector<f64>, held: &DVector<f64>) -> DVector<f64> {
            -held
        }
        fn decision(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn check(&self, _t: f64, _x: &DVector<f64>) -> Result<()> {
            Ok(())
        }
    }

    fn cfg(refine: bool) -> DriveConfig {
        DriveConfig {
            h: 1e-3,
            t_end: 5.0,
            trigger: Some(TriggerConfig::new(0.75, 0.8).unwrap()),
            refine_events: refine,
        }
    }

    #[test]
    fn scalar_zoh_fires_at_constant_relative_intervals() {
        // x(t) = x_k (1 − s): fire once σ(1 − s) < α s, s* = σ/(σ+α).
        let s_star = 0.75 / 1.55;
        let mut log = EventLog::new();
        drive(&Scalar, DVector::from_element(1, 1.0), cfg(true), &mut log, |_, _| {}, |_| {}).unwrap();
        let times = log.times();
        assert!(times.len() > 5);
        for w in times.windows(2) {
            assert!(((w[1] - w[0]) - s_star).abs() < 1e-8, "{:?}", w);
        }
    }

    #[test]
    fn sample_based_events_land_on_grid() {
        let mut log = EventLog::new();
        drive(&Scalar, DVector::from_element(1, 1.0), cfg(false), &mut log, |_, _| {}, |_| {}).unwrap();
        for t in log.times() {
            let k = (t / 1e-3).round();
            assert!((t - k * 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_horizon_only_initial_event() {
        let mut log = EventLog::new();
        let mut records = 0;
        let c = DriveConfig { t_end: 0.0, ..cfg(false) };
        drive(&Scalar, DVector::from_element(1, 1.0), c, &mut log, |_, _| records += 1, |_| {}).unwrap();
        assert_eq!(log.times(), &[0.0]);
        assert_eq!(records, 1);
    }

    /// dx/dt = cos(t)·x, x(t) = exp(sin t).
    struct Growth;

    impl HeldFlow for Growth {
        fn rhs(&self, t: f64, x: &DVector<f64>, _held: &DVector<f64>) -> DVector<f64> {
            x * t.cos()
        }
        fn decision(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn check(&self, _t: f64, _x: &DVector<f64>) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn rk4_is_fourth_order_between_events() {
        let err = |h: f64| {
            let mut x = DVector::from_element(1, 1.0);
            let held = DVector::zeros(1);
            let steps = (2.0 / h).round() as usize;
            for k in 0..steps {
                x = rk4(&Growth, k as f64 * h, &x, &held, h);
            }
            (x[0] - 2f64.sin().exp()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }
}
