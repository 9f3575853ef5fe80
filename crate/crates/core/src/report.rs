//! Per-scenario analysis and side-by-side comparison reports.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    averaging_gap, check_envelopes, newton_certificates, run_averaged, AveragedRun, AveragedVariant, AveragingGap,
    EnvelopeCheck,
};
use crate::control::Scheme;
use crate::error::{Error, Result};
use crate::sim::{simulate, Outcome, RunOutput, Scenario};
use crate::trigger::zeno_lower_bound;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub scheme: Scheme,
    pub outcome: Outcome,
    pub dim: usize,
    pub omega: f64,
    pub omega_r: f64,
    /// Row-major `Γ(0)`.
    pub gamma0: Vec<f64>,
    pub h: f64,
    pub t_end: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub refine_events: bool,
    pub update_count: usize,
    pub event_times: Vec<f64>,
    pub min_inter_event: Option<f64>,
    pub mean_inter_event: Option<f64>,
    /// Idealized `ω → ∞` inter-event bound; event-triggered schemes only.
    pub tau_star: Option<f64>,
    pub final_theta_error: f64,
    pub final_theta_hat_error: f64,
    pub final_output_error: f64,
    pub convergence_time: Option<f64>,
    /// `2‖P₁KH*‖/λ_min(Q)`; Newton schemes only.
    pub alpha_min: Option<f64>,
    /// Residuals of the `−K` and `H*(−K)H*⁻¹` certificates.
    pub lyapunov_residuals: Option<[f64; 2]>,
    pub envelopes: Option<EnvelopeCheck>,
    pub averaging_gap: Option<AveragingGap>,
    pub averaged_update_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub scheme: Scheme,
    pub completed: bool,
    pub update_count: usize,
    pub convergence_time: Option<f64>,
    pub envelopes_passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenarios: Vec<ScenarioReport>,
    pub comparison: Vec<ComparisonRow>,
}

impl Report {
    pub fn all_completed(&self) -> bool {
        self.scenarios.iter().all(|s| s.outcome.is_completed())
    }
}

/// Everything produced for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub output: RunOutput,
    pub averaged: Option<AveragedRun>,
    pub report: ScenarioReport,
}

/// Simulates a scenario and its averaged loop and evaluates the stability
/// checks that apply to its scheme.
pub fn analyze(scenario: &Scenario) -> Result<ScenarioResult> {
    let output = simulate(scenario, |_| {})?;
    let scheme = scenario.scheme();
    let averaged = run_averaged(scenario, AveragedVariant::Nonlinear).ok();
    let gap = averaged
        .as_ref()
        .and_then(|a| averaging_gap(&output.trajectory, &a.records).ok());
    let certs = if scheme.is_newton() {
        Some(newton_certificates(scenario)?)
    } else {
        None
    };
    let envelopes = if scheme.is_newton() && output.summary.outcome.is_completed() {
        Some(check_envelopes(scenario, &output.trajectory)?)
    } else {
        None
    };
    let tau_star = if scheme.is_event_triggered() {
        Some(zeno_lower_bound(scenario.gains.norm(), &scenario.trigger, 0.0)?)
    } else {
        None
    };
    let s = &output.summary;
    let report = ScenarioReport {
        name: scenario.name.clone(),
        scheme,
        outcome: s.outcome.clone(),
        dim: scenario.dim(),
        omega: scenario.design.omega(),
        omega_r: scenario.omega_r,
        gamma0: scenario.gamma0.transpose().as_slice().to_vec(),
        h: scenario.h,
        t_end: scenario.t_end,
        sigma: scenario.trigger.sigma(),
        alpha: scenario.trigger.alpha(),
        refine_events: scenario.refine_events,
        update_count: s.update_count,
        event_times: output.events.times().to_vec(),
        min_inter_event: s.min_inter_event,
        mean_inter_event: s.mean_inter_event,
        tau_star,
        final_theta_error: s.final_theta_error,
        final_theta_hat_error: s.final_theta_hat_error,
        final_output_error: s.final_output_error,
        convergence_time: s.convergence_time,
        alpha_min: certs.as_ref().map(|c| c.alpha_min),
        lyapunov_residuals: certs.as_ref().map(|c| [c.p1.residual, c.p2.residual]),
        envelopes,
        averaging_gap: gap,
        averaged_update_count: averaged.as_ref().map(|a| a.events.count()),
    };
    Ok(ScenarioResult {
        output,
        averaged,
        report,
    })
}

/// Analyzes every scenario, concurrently, keeping the input order.
pub fn run_comparison(scenarios: &[Scenario]) -> Result<(Vec<ScenarioResult>, Report)> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario list"));
    }
    let results = scenarios.par_iter().map(analyze).collect::<Result<Vec<_>>>()?;
    let comparison = results
        .iter()
        .map(|r| ComparisonRow {
            name: r.report.name.clone(),
            scheme: r.report.scheme,
            completed: r.report.outcome.is_completed(),
            update_count: r.report.update_count,
            convergence_time: r.report.convergence_time,
            envelopes_passed: r.report.envelopes.as_ref().map(|e| e.passed.all()),
        })
        .collect();
    let report = Report {
        scenarios: results.iter().map(|r| r.report.clone()).collect(),
        comparison,
    };
    Ok((results, report))
}
