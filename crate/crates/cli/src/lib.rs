//! Command-line front end: scenario files, run orchestration and output
//! writers.

pub mod output;
pub mod plot;
pub mod scenario_file;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use etes_core::report::ScenarioResult;
use etes_core::signals::check_probing_frequencies;
use etes_core::{run_comparison, Report, Scenario, TriggerConfig};
use nalgebra::DMatrix;

use crate::output::{report_json, report_text, write_averaged, write_comparison, write_events, write_file, write_trajectory};
use crate::plot::{plot_script, PlotRun};
use crate::scenario_file::{emit_scenario, parse_scenario};

/// Exit status when a run diverged; its partial outputs are still written.
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "etes", version, about = "Event-triggered Newton and gradient extremum seeking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario.
    Run(RunArgs),
    /// Simulate several scenarios and tabulate them side by side.
    Compare(RunArgs),
    /// Repeat a scenario over a range of one parameter.
    Sweep(SweepArgs),
    /// Parse and check scenarios without simulating.
    Validate(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file or bundled name (paper_sec6_newton, paper_sec6_gradient,
    /// scalar_smoke).
    #[arg(long = "scenario", value_name = "PATH")]
    pub scenario: Vec<String>,
    #[arg(value_name = "SCENARIO")]
    pub positional: Vec<String>,
}

impl ScenarioArgs {
    fn all(&self) -> Vec<String> {
        self.scenario.iter().chain(&self.positional).cloned().collect()
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Integration step, overriding the scenario.
    #[arg(long = "step", value_name = "H", allow_hyphen_values = true)]
    pub step: Option<f64>,
    /// Horizon, overriding the scenario.
    #[arg(long = "horizon", value_name = "T", allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Locate trigger crossings inside a step by bisection.
    #[arg(long)]
    pub refine_events: bool,
    /// Also write plot.py.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Base frequency; the step is rescaled with it.
    Omega,
    Sigma,
    Alpha,
    OmegaR,
    /// `γ₀` in `Γ(0) = γ₀·I`.
    Gamma0,
    H,
    TEnd,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, allow_hyphen_values = true)]
    pub start: f64,
    /// Geometric progression `start·factor^k`.
    #[arg(long, conflicts_with = "stop")]
    pub factor: Option<f64>,
    /// Linear progression from start to stop.
    #[arg(long)]
    pub stop: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
}

fn load(arg: &str, args: &RunArgs) -> Result<Scenario> {
    let mut s = parse_scenario(arg)?;
    if let Some(h) = args.step {
        s.h = h;
    }
    if let Some(t) = args.horizon {
        s.t_end = t;
    }
    if args.refine_events {
        s.refine_events = true;
    }
    s.validate().with_context(|| format!("{arg}: invalid after command-line overrides"))?;
    Ok(s)
}

fn write_run(dir: &Path, scenario: &Scenario, r: &ScenarioResult) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join("trajectory.csv"), |w| write_trajectory(w, &r.output.trajectory))?;
    write_file(&dir.join("events.csv"), |w| write_events(w, &r.output.events))?;
    if let Some(avg) = &r.averaged {
        write_file(&dir.join("averaged.csv"), |w| write_averaged(w, scenario.dim(), &avg.records))?;
    }
    fs::write(dir.join("scenario.toml"), emit_scenario(scenario))?;
    Ok(())
}

fn write_reports(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), report_text(report))?;
    fs::write(dir.join("report.json"), report_json(report) + "\n")?;
    Ok(())
}

fn plot_runs<'a>(results: &'a [ScenarioResult], dirs: &'a [String]) -> Vec<PlotRun<'a>> {
    results
        .iter()
        .zip(dirs)
        .map(|(r, d)| PlotRun {
            label: &r.report.name,
            dir: d,
            dim: r.report.dim,
            has_gamma: r.report.scheme.is_newton(),
            empty: r.output.trajectory.len() <= 1,
        })
        .collect()
}

fn diverged_status(report: &Report) -> i32 {
    let mut status = 0;
    for s in &report.scenarios {
        if let etes_core::Outcome::Diverged { t, reason } = &s.outcome {
            eprintln!("{}: diverged at t={t}: {reason}", s.name);
            status = EXIT_DIVERGED;
        }
    }
    status
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let args_list = args.scenarios.all();
    let [arg] = args_list.as_slice() else {
        bail!("run takes exactly one scenario (got {}); use compare for several", args_list.len());
    };
    let scenario = load(arg, args)?;
    let (results, report) = run_comparison(std::slice::from_ref(&scenario))?;
    write_run(&args.out, &scenario, &results[0])?;
    write_reports(&args.out, &report)?;
    if args.plot {
        let dirs = [".".to_string()];
        fs::write(args.out.join("plot.py"), plot_script(&plot_runs(&results, &dirs)))?;
    }
    print!("{}", report_text(&report));
    Ok(diverged_status(&report))
}

/// Directory names for each scenario, made unique by an index suffix.
fn run_dirs(scenarios: &[Scenario]) -> Vec<String> {
    let mut dirs: Vec<String> = Vec::new();
    for s in scenarios {
        let base: String = s
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        let mut name = base.clone();
        let mut k = 2;
        while dirs.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        dirs.push(name);
    }
    dirs
}

fn run_many(scenarios: &[Scenario], args: &RunArgs) -> Result<(Vec<ScenarioResult>, Report)> {
    let (results, report) = run_comparison(scenarios)?;
    let dirs = run_dirs(scenarios);
    for ((s, r), d) in scenarios.iter().zip(&results).zip(&dirs) {
        write_run(&args.out.join(d), s, r)?;
    }
    write_reports(&args.out, &report)?;
    write_file(&args.out.join("comparison.csv"), |w| write_comparison(w, &report))?;
    if args.plot {
        fs::write(args.out.join("plot.py"), plot_script(&plot_runs(&results, &dirs)))?;
    }
    Ok((results, report))
}

fn cmd_compare(args: &RunArgs) -> Result<i32> {
    let args_list = args.scenarios.all();
    if args_list.is_empty() {
        bail!("compare needs at least one scenario");
    }
    let scenarios = args_list.iter().map(|s| load(s, args)).collect::<Result<Vec<_>>>()?;
    let (_, report) = run_many(&scenarios, args)?;
    print!("{}", report_text(&report));
    Ok(diverged_status(&report))
}

pub fn sweep_values(start: f64, factor: Option<f64>, stop: Option<f64>, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    Ok(match (factor, stop) {
        (Some(f), None) => (0..count).map(|k| start * f.powi(k as i32)).collect(),
        (None, Some(stop)) if count == 1 => vec![start, stop][..1].to_vec(),
        (None, Some(stop)) => (0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect(),
        (None, None) => bail!("sweep needs --factor or --stop"),
        (Some(_), Some(_)) => bail!("--factor and --stop are exclusive"),
    })
}

pub fn apply_param(base: &Scenario, param: SweepParam, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    match param {
        SweepParam::Omega => {
            s.design = s.design.with_omega(value)?;
            s.h = base.h * base.design.omega() / value;
        }
        SweepParam::Sigma => s.trigger = TriggerConfig::new(value, s.trigger.alpha())?,
        SweepParam::Alpha => s.trigger = TriggerConfig::new(s.trigger.sigma(), value)?,
        SweepParam::OmegaR => s.omega_r = value,
        SweepParam::Gamma0 => s.gamma0 = DMatrix::identity(s.dim(), s.dim()) * value,
        SweepParam::H => s.h = value,
        SweepParam::TEnd => s.t_end = value,
    }
    s.name = format!("{}_{}_{}", base.name, param_name(param), value);
    s.validate()?;
    Ok(s)
}

pub fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::Omega => "omega",
        SweepParam::Sigma => "sigma",
        SweepParam::Alpha => "alpha",
        SweepParam::OmegaR => "omega_r",
        SweepParam::Gamma0 => "gamma0",
        SweepParam::H => "h",
        SweepParam::TEnd => "T_end",
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let args_list = args.run.scenarios.all();
    let [arg] = args_list.as_slice() else {
        bail!("sweep takes exactly one scenario (got {})", args_list.len());
    };
    let base = load(arg, &args.run)?;
    let values = sweep_values(args.start, args.factor, args.stop, args.count)?;
    let scenarios = values
        .iter()
        .map(|&v| apply_param(&base, args.param, v))
        .collect::<Result<Vec<_>>>()?;
    let (_, report) = run_many(&scenarios, &args.run)?;
    write_file(&args.run.out.join("sweep.csv"), |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            param_name(args.param),
            "completed",
            "update_count",
            "final_theta_error",
            "final_output_error",
            "min_inter_event",
            "gap_theta_hat",
            "gap_ghat",
        ])?;
        for (v, r) in values.iter().zip(&report.scenarios) {
            let opt = |x: Option<f64>| x.map_or(String::new(), output::num);
            w.write_record([
                output::num(*v),
                r.outcome.is_completed().to_string(),
                r.update_count.to_string(),
                output::num(r.final_theta_error),
                output::num(r.final_output_error),
                opt(r.min_inter_event),
                opt(r.averaging_gap.map(|g| g.theta_hat)),
                opt(r.averaging_gap.map(|g| g.ghat)),
            ])?;
        }
        w.flush()
    })?;
    println!("{:>14} {:>9} {:>8} {:>14}", param_name(args.param), "completed", "updates", "gap theta_hat");
    for (v, r) in values.iter().zip(&report.scenarios) {
        println!(
            "{v:>14.6} {:>9} {:>8} {:>14}",
            r.outcome.is_completed(),
            r.update_count,
            r.averaging_gap.map_or("n/a".to_string(), |g| format!("{:.6e}", g.theta_hat))
        );
    }
    Ok(diverged_status(&report))
}

fn cmd_validate(args: &ScenarioArgs) -> Result<i32> {
    let args_list = args.all();
    if args_list.is_empty() {
        bail!("validate needs at least one scenario");
    }
    let mut failed = 0;
    for arg in &args_list {
        match parse_scenario(arg) {
            Ok(s) => {
                let clauses = check_probing_frequencies(s.design.multipliers())?;
                println!(
                    "ok  {arg}: {} (n={}, scheme={}, T={:.6}, h={:.6e}, frequency clauses {})",
                    s.name,
                    s.dim(),
                    s.scheme(),
                    s.design.common_period(),
                    s.h,
                    if clauses.passed() { "pass" } else { "fail" }
                );
            }
            Err(e) => {
                println!("err {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} scenario(s) failed validation", args_list.len());
    }
    Ok(0)
}

/// Runs a parsed command and returns the process exit status.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_value_progressions() {
        assert_eq!(sweep_values(1.0, Some(2.0), None, 4).unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(sweep_values(0.0, None, Some(1.0), 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(sweep_values(1.0, None, None, 3).is_err());
        assert!(sweep_values(1.0, Some(2.0), None, 0).is_err());
    }

    #[test]
    fn omega_sweep_rescales_step() {
        let base = Scenario::benchmark_newton();
        let s = apply_param(&base, SweepParam::Omega, 2.0).unwrap();
        assert_eq!(s.design.omega(), 2.0);
        assert_eq!(s.h, base.h / 2.0);
        assert_eq!(s.h, etes_core::sim::default_step(&s.design));
    }

    #[test]
    fn duplicate_names_get_suffixes() {
        let s = Scenario::benchmark_newton();
        assert_eq!(
            run_dirs(&[s.clone(), s.clone(), s]),
            vec!["paper_sec6_newton", "paper_sec6_newton_2", "paper_sec6_newton_3"]
        );
    }
}
