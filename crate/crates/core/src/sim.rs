//! Closed-loop simulation: plant, probing signals, estimators, trigger and
//! tuning law wired into one fixed-step integration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::{ControllerGains, Scheme};
use crate::error::{Error, Result};
use crate::estimators::{gradient_estimate, hessian_estimate, RiccatiFilter};
use crate::hybrid::{self, DriveConfig, HeldFlow, Snapshot, StepInfo};
use crate::linalg;
use crate::plant::{QuadraticMap, StaticMap};
use crate::signals::{check_probing_frequencies, DitherDesign, Multiplier};
use crate::trigger::{EventLog, TriggerConfig};

/// Samples per fastest dither period used for the default step.
pub const DEFAULT_SAMPLES_PER_FAST_PERIOD: f64 = 200.0;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_HORIZON: f64 = 100.0;
/// Riccati blow-up guard, relative to `‖Γ(0)‖`.
pub const DEFAULT_RICCATI_CEILING: f64 = 1e6;
pub const DEFAULT_OMEGA_R: f64 = 0.01;
pub const DEFAULT_GAMMA0: f64 = 1e-4;

/// `h = T_fast/200` with `T_fast = 2π/max ω_i`.
pub fn default_step(design: &DitherDesign) -> f64 {
    design.fastest_period() / DEFAULT_SAMPLES_PER_FAST_PERIOD
}

/// Everything needed for one deterministic closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub map: QuadraticMap,
    pub design: DitherDesign,
    pub gains: ControllerGains,
    pub trigger: TriggerConfig,
    pub gamma0: DMatrix<f64>,
    pub theta_hat0: DVector<f64>,
    pub omega_r: f64,
    pub h: f64,
    pub t_end: f64,
    pub stride: usize,
    pub refine_events: bool,
    pub riccati_ceiling: f64,
}

impl Scenario {
    /// The two-input benchmark map with the event-triggered Newton law.
    pub fn benchmark_newton() -> Self {
        let map = QuadraticMap::new(
            100.0,
            DMatrix::from_row_slice(2, 2, &[100.0, 30.0, 30.0, 20.0]),
            DVector::from_vec(vec![2.0, 4.0]),
        )
        .expect("benchmark map");
        let design = DitherDesign::new(
            vec![0.1, 0.1],
            vec![Multiplier::from_integer(1), Multiplier::from_integer(7)],
            1.0,
        )
        .expect("benchmark dither");
        let h = default_step(&design);
        Self {
            name: "paper_sec6_newton".into(),
            map,
            design,
            gains: ControllerGains::new(DVector::from_element(2, 1.0), Scheme::NewtonEt).expect("gain"),
            trigger: TriggerConfig::new(0.75, 0.8).expect("trigger"),
            gamma0: DMatrix::identity(2, 2) * DEFAULT_GAMMA0,
            theta_hat0: DVector::from_vec(vec![2.5, 5.0]),
            omega_r: DEFAULT_OMEGA_R,
            h,
            t_end: DEFAULT_HORIZON,
            stride: DEFAULT_STRIDE,
            refine_events: false,
            riccati_ceiling: DEFAULT_RICCATI_CEILING,
        }
    }

    /// Same map and probing with the event-triggered gradient law, `K = −I`.
    pub fn benchmark_gradient() -> Self {
        Self {
            name: "paper_sec6_gradient".into(),
            gains: ControllerGains::new(DVector::from_element(2, -1.0), Scheme::GradientEt).expect("gain"),
            ..Self::benchmark_newton()
        }
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn scheme(&self) -> Scheme {
        self.gains.scheme()
    }

    /// Checks every cross-module precondition, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let dims = [
            ("amplitudes", self.design.dim()),
            ("K", self.gains.k_diag().len()),
            ("theta_hat0", self.theta_hat0.len()),
            ("gamma0", self.gamma0.nrows()),
            ("gamma0", self.gamma0.ncols()),
        ];
        for (what, got) in dims {
            if got != n {
                return Err(Error::invalid(what, format!("expected dimension {n}, got {got}")));
            }
        }
        let report = check_probing_frequencies(self.design.multipliers())?;
        if let Some(v) = report.violations.first() {
            return Err(Error::invalid(
                "multipliers",
                format!(
                    "probing frequencies violate the resonance exclusion {v} ({} violation(s) total)",
                    report.violations.len()
                ),
            ));
        }
        self.map.extremum_kind()?;
        self.gains.validate_against(&self.map)?;
        RiccatiFilter::new(self.omega_r)?;
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid("h", "step must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::invalid("T_end", "horizon must be non-negative"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        if self.gamma0.iter().chain(self.theta_hat0.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("init", "initial conditions must be finite"));
        }
        if !(self.riccati_ceiling > 1.0) {
            return Err(Error::invalid("riccati_ceiling", "must exceed 1"));
        }
        Ok(())
    }
}

/// State of one closed loop; `Γ` is present for Newton schemes only.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub t: f64,
    pub theta_hat: DVector<f64>,
    pub gamma: Option<DMatrix<f64>>,
    pub held_z: DVector<f64>,
    pub held_u: DVector<f64>,
}

/// One sampled row of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub theta: Vec<f64>,
    pub y: f64,
    pub theta_hat: Vec<f64>,
    pub ghat: Vec<f64>,
    pub u: Vec<f64>,
    /// Row-major `Γ`; empty for gradient schemes.
    pub gamma: Vec<f64>,
    /// NaN for continuous laws.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// How a run ended. A diverged run keeps everything recorded up to the last
/// accepted step.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Diverged { t: f64, reason: String },
}

impl Outcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scheme: Scheme,
    pub outcome: Outcome,
    pub update_count: usize,
    pub final_time: f64,
    /// `‖θ(T_end) − θ*‖`
    pub final_theta_error: f64,
    /// `‖θ̂(T_end) − θ*‖`
    pub final_theta_hat_error: f64,
    /// `|y(T_end) − Q*|`
    pub final_output_error: f64,
    pub min_inter_event: Option<f64>,
    pub mean_inter_event: Option<f64>,
    /// First step time with `‖θ̂ − θ*‖ ≤ 2a`.
    pub convergence_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub events: EventLog,
    pub summary: RunSummary,
    pub final_state: LoopState,
}

/// The closed loop as a held-input flow with state `[θ̂; vec(Γ)]`.
pub(crate) struct ClosedLoop<'a> {
    scenario: &'a Scenario,
    filter: Option<RiccatiFilter>,
    gamma_limit: f64,
}

pub(crate) struct Measurement {
    pub theta: DVector<f64>,
    pub y: f64,
    pub ghat: DVector<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let filter = if scenario.scheme().is_newton() {
            Some(RiccatiFilter::new(scenario.omega_r)?)
        } else {
            None
        };
        let gamma_limit = scenario.riccati_ceiling * scenario.gamma0.norm().max(f64::MIN_POSITIVE);
        Ok(Self {
            scenario,
            filter,
            gamma_limit,
        })
    }

    fn n(&self) -> usize {
        self.scenario.dim()
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let n = self.n();
        let mut x = DVector::zeros(self.state_len());
        x.rows_mut(0, n).copy_from(&self.scenario.theta_hat0);
        if self.filter.is_some() {
            x.rows_mut(n, n * n).copy_from_slice(self.scenario.gamma0.as_slice());
        }
        x
    }

    fn state_len(&self) -> usize {
        let n = self.n();
        if self.filter.is_some() {
            n + n * n
        } else {
            n
        }
    }

    pub fn theta_hat(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.n()).into_owned()
    }

    pub fn gamma(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.n();
        self.filter
            .map(|_| DMatrix::from_column_slice(n, n, x.rows(n, n * n).as_slice()))
    }

    pub fn measure(&self, t: f64, x: &DVector<f64>) -> Measurement {
        let s = self.scenario;
        let theta = self.theta_hat(x) + s.design.dither(t);
        let y = s.map.evaluate(&theta);
        let ghat = gradient_estimate(&s.design.demod(t), y);
        Measurement { theta, y, ghat }
    }
}

impl HeldFlow for ClosedLoop<'_> {
    fn rhs(&self, t: f64, x: &DVector<f64>, held: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut dx = DVector::zeros(x.len());
        // dθ̂/dt = u, held over the step.
        dx.rows_mut(0, n).copy_from(&self.scenario.gains.apply(held));
        if let Some(filter) = &self.filter {
            let s = self.scenario;
            let gamma = DMatrix::from_column_slice(n, n, x.rows(n, n * n).as_slice());
            let theta = x.rows(0, n) + s.design.dither(t);
            let y = s.map.evaluate(&theta);
            let hhat = hessian_estimate(&s.design.hessian_probe(t), y);
            dx.rows_mut(n, n * n)
                .copy_from_slice(filter.rhs(&gamma, &hhat).as_slice());
        }
        dx
    }

    fn decision(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let m = self.measure(t, x);
        match self.gamma(x) {
            Some(gamma) => gamma * m.ghat,
            None => m.ghat,
        }
    }

    fn check(&self, t: f64, x: &DVector<f64>) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t,
                reason: "non-finite loop state".into(),
            });
        }
        if let Some(gamma) = self.gamma(x) {
            let norm = gamma.norm();
            if norm > self.gamma_limit {
                return Err(Error::Diverged {
                    t,
                    reason: format!(
                        "inverse-Hessian estimate norm {norm:.3e} exceeded the ceiling {:.3e}",
                        self.gamma_limit
                    ),
                });
            }
        }
        Ok(())
    }
}

fn drive_config(s: &Scenario) -> DriveConfig {
    DriveConfig {
        h: s.h,
        t_end: s.t_end,
        trigger: s.scheme().is_event_triggered().then_some(s.trigger),
        refine_events: s.refine_events,
    }
}

/// Runs a scenario, reporting every step's trigger bookkeeping. Divergence
/// stops the integration and is reported in the summary's outcome; only an
/// invalid scenario is an error.
pub fn simulate<F: FnMut(&StepInfo)>(scenario: &Scenario, on_step: F) -> Result<RunOutput> {
    let lp = ClosedLoop::new(scenario)?;
    let n = scenario.dim();
    let stride = scenario.stride;
    let a = scenario.design.rss_amplitude();
    let theta_star = scenario.map.theta_star().clone();
    let mut records = Vec::new();
    let mut convergence_time = None;
    let mut last: Option<(Record, DVector<f64>, DVector<f64>)> = None;
    let mut log = EventLog::new();

    let record = |k: usize, snap: &Snapshot<'_>| {
        let theta_hat = lp.theta_hat(snap.x);
        if convergence_time.is_none() && (&theta_hat - &theta_star).norm() <= 2.0 * a {
            convergence_time = Some(snap.t);
        }
        let m = lp.measure(snap.t, snap.x);
        let u = scenario.gains.apply(snap.held);
        let gamma = lp
            .gamma(snap.x)
            .map(|g| g.transpose().as_slice().to_vec())
            .unwrap_or_default();
        let row = Record {
            t: snap.t,
            theta: m.theta.as_slice().to_vec(),
            y: m.y,
            theta_hat: theta_hat.as_slice().to_vec(),
            ghat: m.ghat.as_slice().to_vec(),
            u: u.as_slice().to_vec(),
            gamma,
            margin: snap.margin,
        };
        if k.is_multiple_of(stride) {
            records.push(row.clone());
        }
        last = Some((row, snap.x.clone(), snap.held.clone()));
    };

    let outcome = match hybrid::drive(&lp, lp.initial_state(), drive_config(scenario), &mut log, record, on_step) {
        Ok(_) => Outcome::Completed,
        Err(Error::Diverged { t, reason }) => Outcome::Diverged { t, reason },
        Err(e) => return Err(e),
    };
    let (last, x, held) = last.expect("initial record");
    if records.last().is_none_or(|r| r.t != last.t) {
        records.push(last.clone());
    }
    let theta_hat = lp.theta_hat(&x);
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        scheme: scenario.scheme(),
        outcome,
        update_count: log.count(),
        final_time: last.t,
        final_theta_error: (DVector::from_vec(last.theta.clone()) - &theta_star).norm(),
        final_theta_hat_error: (&theta_hat - &theta_star).norm(),
        final_output_error: (last.y - scenario.map.q_star()).abs(),
        min_inter_event: log.min_interval(),
        mean_inter_event: log.mean_interval(),
        convergence_time,
    };
    let final_state = LoopState {
        t: last.t,
        theta_hat,
        gamma: lp.gamma(&x),
        held_u: scenario.gains.apply(&held),
        held_z: held,
    };
    Ok(RunOutput {
        trajectory: Trajectory { dim: n, records },
        events: log,
        summary,
        final_state,
    })
}

/// Runs a scenario to `T_end`; divergence is an error.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let out = simulate(scenario, |_| {})?;
    match &out.summary.outcome {
        Outcome::Completed => Ok(out),
        Outcome::Diverged { t, reason } => Err(Error::Diverged {
            t: *t,
            reason: reason.clone(),
        }),
    }
}

/// The Hessian-aware part of the state a run ends in, for analysis:
/// `Γ − H*⁻¹` where defined.
pub fn inverse_hessian_error(scenario: &Scenario, gamma: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::spectral_norm(&(gamma - scenario.map.h_star_inverse()?)))
}
