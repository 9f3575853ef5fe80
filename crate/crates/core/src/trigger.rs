//! Static event triggering on a generic decision signal `z`: `ΓĜ` for the
//! Newton loop, `Ĝ` for the gradient loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    sigma: f64,
    alpha: f64,
}

impl TriggerConfig {
    pub fn new(sigma: f64, alpha: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::invalid("sigma", "sigma must lie in (0,1)"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", "alpha must be positive"));
        }
        Ok(Self { sigma, alpha })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `σ̄ = σ/α`.
    pub fn sigma_bar(&self) -> f64 {
        self.sigma / self.alpha
    }
}

/// The decision signal frozen at the last event.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    pub held_z: DVector<f64>,
    pub last_event_time: f64,
}

impl TriggerState {
    pub fn new(held_z: DVector<f64>, t: f64) -> Self {
        Self {
            held_z,
            last_event_time: t,
        }
    }

    /// `e = held_z − z_now`.
    pub fn error(&self, z_now: &DVector<f64>) -> DVector<f64> {
        &self.held_z - z_now
    }

    /// Latches `z_now` at `t` and appends `t` to the log. Times must strictly
    /// increase.
    pub fn fire(&mut self, z_now: &DVector<f64>, t: f64, log: &mut EventLog) -> Result<()> {
        log.push(t)?;
        self.held_z.copy_from(z_now);
        self.last_event_time = t;
        Ok(())
    }
}

/// `Ξ = σ‖z‖ − α‖held_z − z‖`; an event is due when `Ξ < 0`.
pub fn trigger_margin(z_now: &DVector<f64>, state: &TriggerState, cfg: &TriggerConfig) -> f64 {
    cfg.sigma * z_now.norm() - cfg.alpha * (&state.held_z - z_now).norm()
}

/// Ordered event instants, starting at `t₀`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    times: Vec<f64>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::NonMonotoneEvent { t, last });
            }
        }
        self.times.push(t);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    pub fn min_interval(&self) -> Option<f64> {
        self.intervals().reduce(f64::min)
    }

    pub fn mean_interval(&self) -> Option<f64> {
        let n = self.times.len();
        (n >= 2).then(|| (self.times[n - 1] - self.times[0]) / (n - 1) as f64)
    }

    /// Number of events at or before `t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }
}

/// Inter-event lower bound for the averaged loop,
/// `τ* = (1/‖K‖)(1/σ̄²)(1 − c/ω)/(1 + 1/σ̄ − c/ω)`.
///
/// `correction` is the value of the `c/ω` term; pass 0 for the idealized
/// `ω → ∞` bound.
pub fn zeno_lower_bound(k_norm: f64, cfg: &TriggerConfig, correction: f64) -> Result<f64> {
    if !(k_norm > 0.0) {
        return Err(Error::invalid("K", "gain norm must be positive"));
    }
    let sb = cfg.sigma_bar();
    if !(sb > 0.0) {
        return Err(Error::invalid("sigma/alpha", "sigma_bar must be positive"));
    }
    Ok((1.0 / k_norm) * (1.0 / (sb * sb)) * (1.0 - correction) / (1.0 + 1.0 / sb - correction))
}
