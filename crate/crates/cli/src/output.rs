//! CSV, text and JSON writers.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use etes_core::analysis::AveragedRecord;
use etes_core::{EventLog, Report, ScenarioReport, Trajectory};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "".to_string(), num)
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("theta_{i}")));
    cols.push("y".into());
    cols.extend((1..=n).map(|i| format!("theta_hat_{i}")));
    cols.extend((1..=n).map(|i| format!("Ghat_{i}")));
    cols.extend((1..=n).map(|i| format!("u_{i}")));
    for i in 1..=n {
        for j in 1..=n {
            cols.push(format!("Gamma_{i}{j}"));
        }
    }
    cols.push("margin".into());
    cols
}

/// Columns `t, theta_1..n, y, theta_hat_1..n, Ghat_1..n, u_1..n,
/// Gamma_11..nn, margin`. Gamma cells are empty for gradient schemes.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> io::Result<()> {
    let n = traj.dim;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(trajectory_header(n))?;
    for r in &traj.records {
        let mut row: Vec<String> = Vec::with_capacity(5 * n + n * n + 3);
        row.push(num(r.t));
        row.extend(r.theta.iter().map(|&x| num(x)));
        row.push(num(r.y));
        row.extend(r.theta_hat.iter().map(|&x| num(x)));
        row.extend(r.ghat.iter().map(|&x| num(x)));
        row.extend(r.u.iter().map(|&x| num(x)));
        if r.gamma.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), n * n));
        } else {
            row.extend(r.gamma.iter().map(|&x| num(x)));
        }
        row.push(num(r.margin));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_events<W: Write>(w: W, events: &EventLog) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["k", "t", "interval"])?;
    let mut prev = None;
    for (k, &t) in events.times().iter().enumerate() {
        w.write_record([k.to_string(), num(t), opt(prev.map(|p| t - p))])?;
        prev = Some(t);
    }
    w.flush()
}

pub fn write_averaged<W: Write>(w: W, n: usize, records: &[AveragedRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("theta_hat_{i}")));
    cols.extend((1..=n).map(|i| format!("Ghat_{i}")));
    for i in 1..=n {
        for j in 1..=n {
            cols.push(format!("Gamma_{i}{j}"));
        }
    }
    cols.push("margin".into());
    w.write_record(&cols)?;
    for r in records {
        let mut row = vec![num(r.t)];
        row.extend(r.theta_hat.iter().map(|&x| num(x)));
        row.extend(r.ghat.iter().map(|&x| num(x)));
        if r.gamma.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), n * n));
        } else {
            row.extend(r.gamma.iter().map(|&x| num(x)));
        }
        row.push(num(r.margin));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_file<F>(path: &Path, f: F) -> io::Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()
}

/// Side-by-side table, one row per scenario.
pub fn write_comparison<W: Write>(w: W, report: &Report) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["scenario", "scheme", "completed", "update_count", "convergence_time", "envelopes_passed"])?;
    for r in &report.comparison {
        w.write_record([
            r.name.clone(),
            r.scheme.to_string(),
            r.completed.to_string(),
            r.update_count.to_string(),
            opt(r.convergence_time),
            r.envelopes_passed.map_or(String::new(), |b| b.to_string()),
        ])?;
    }
    w.flush()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

pub fn scenario_text(r: &ScenarioReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario            {}", r.name);
    let _ = writeln!(s, "scheme              {}", r.scheme);
    match &r.outcome {
        etes_core::Outcome::Completed => {
            let _ = writeln!(s, "outcome             completed");
        }
        etes_core::Outcome::Diverged { t, reason } => {
            let _ = writeln!(s, "outcome             diverged at t={t:.6}: {reason}");
        }
    }
    let _ = writeln!(s, "h / T_end           {:.6e} / {}", r.h, r.t_end);
    let _ = writeln!(s, "omega / omega_r     {} / {}", r.omega, r.omega_r);
    let _ = writeln!(s, "sigma / alpha       {} / {}", r.sigma, r.alpha);
    let _ = writeln!(s, "gamma0              {:?}", r.gamma0);
    let _ = writeln!(s, "refine_events       {}", r.refine_events);
    let _ = writeln!(s, "updates             {}", r.update_count);
    let _ = writeln!(s, "min inter-event     {}", fmt_opt(r.min_inter_event));
    let _ = writeln!(s, "mean inter-event    {}", fmt_opt(r.mean_inter_event));
    let _ = writeln!(s, "tau* (omega->inf)   {}", fmt_opt(r.tau_star));
    let _ = writeln!(s, "|theta-theta*|      {:.6e}", r.final_theta_error);
    let _ = writeln!(s, "|theta_hat-theta*|  {:.6e}", r.final_theta_hat_error);
    let _ = writeln!(s, "|y-Q*|              {:.6e}", r.final_output_error);
    let _ = writeln!(s, "convergence time    {}", fmt_opt(r.convergence_time));
    if let Some(a) = r.alpha_min {
        let _ = writeln!(s, "alpha_min           {a:.6} (alpha = {}, not enforced)", r.alpha);
    }
    if let Some([r1, r2]) = r.lyapunov_residuals {
        let _ = writeln!(s, "lyapunov residuals  {r1:.3e} {r2:.3e}");
    }
    if let Some(e) = &r.envelopes {
        let p = &e.passed;
        let _ = writeln!(
            s,
            "envelopes           theta {} y {} Ghat {} Gamma {}",
            p.theta, p.y, p.ghat, p.gamma
        );
        let w = &e.worst_ratio;
        let _ = writeln!(
            s,
            "envelope worst      theta {:.4} y {:.4} Ghat {:.4} Gamma {:.4}",
            w.theta, w.y, w.ghat, w.gamma
        );
    }
    if let Some(g) = &r.averaging_gap {
        let _ = writeln!(
            s,
            "averaging gap       theta_hat {:.6e} Ghat {:.6e} Gamma {}",
            g.theta_hat,
            g.ghat,
            g.gamma.map_or("n/a".to_string(), |v| format!("{v:.6e}"))
        );
    }
    if let Some(c) = r.averaged_update_count {
        let _ = writeln!(s, "averaged updates    {c}");
    }
    s
}

pub fn report_text(report: &Report) -> String {
    let mut s = String::new();
    for r in &report.scenarios {
        s.push_str(&scenario_text(r));
        s.push('\n');
    }
    if report.scenarios.len() > 1 {
        let _ = writeln!(s, "{:<28} {:<20} {:>9} {:>8} {:>12}", "scenario", "scheme", "completed", "updates", "converged");
        for r in &report.comparison {
            let _ = writeln!(
                s,
                "{:<28} {:<20} {:>9} {:>8} {:>12}",
                r.name,
                r.scheme.as_str(),
                r.completed,
                r.update_count,
                fmt_opt(r.convergence_time)
            );
        }
    }
    s
}

pub fn report_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("reports always serialize")
}
