//! Matplotlib script that renders the five standard panels from the CSVs.

use std::fmt::Write as _;

/// One run the script should read: a label and the directory, relative to
/// the script, holding its `trajectory.csv` and `events.csv`.
pub struct PlotRun<'a> {
    pub label: &'a str,
    pub dir: &'a str,
    pub dim: usize,
    pub has_gamma: bool,
    pub empty: bool,
}

fn py_str(s: &str) -> String {
    format!("{s:?}")
}

pub fn plot_script(runs: &[PlotRun<'_>]) -> String {
    let mut s = String::new();
    s.push_str("#!/usr/bin/env python3\n");
    s.push_str("# Renders theta(t), u(t), y(t), the update staircase and Gamma(t).\n");
    s.push_str("# Usage: python3 plot.py [output.png]\n");
    for r in runs.iter().filter(|r| r.empty) {
        let _ = writeln!(s, "# warning: {} has no trajectory samples; its panels stay empty", r.label);
    }
    s.push_str(
        r#"import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(os.path.join(HERE, path), newline="") as f:
        rows = list(csv.DictReader(f))
    cols = {}
    for row in rows:
        for k, v in row.items():
            cols.setdefault(k, []).append(float(v) if v not in ("", None) else float("nan"))
    return cols


RUNS = [
"#,
    );
    for r in runs {
        let _ = writeln!(
            s,
            "    ({}, {}, {}, {}),",
            py_str(r.label),
            py_str(r.dir),
            r.dim,
            if r.has_gamma { "True" } else { "False" }
        );
    }
    s.push_str(
        r#"]

fig, axes = plt.subplots(5, 1, figsize=(9, 16), sharex=True)
ax_theta, ax_u, ax_y, ax_upd, ax_gamma = axes
for label, d, n, has_gamma in RUNS:
    traj = read(os.path.join(d, "trajectory.csv"))
    events = read(os.path.join(d, "events.csv"))
    t = traj.get("t", [])
    for i in range(1, n + 1):
        ax_theta.plot(t, traj.get(f"theta_{i}", []), label=f"{label} theta_{i}")
        ax_u.step(t, traj.get(f"u_{i}", []), where="post", label=f"{label} u_{i}")
    ax_y.plot(t, traj.get("y", []), label=label)
    times = events.get("t", [])
    ax_upd.step(times, list(range(1, len(times) + 1)), where="post", label=label)
    if has_gamma:
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                ax_gamma.plot(t, traj.get(f"Gamma_{i}{j}", []), label=f"{label} Gamma_{i}{j}")

ax_theta.set_ylabel("theta")
ax_u.set_ylabel("u")
ax_y.set_ylabel("y")
ax_upd.set_ylabel("updates")
ax_gamma.set_ylabel("Gamma")
ax_gamma.set_xlabel("t [s]")
for ax in axes:
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "panels.png"), dpi=120)
"#,
    );
    s
}
