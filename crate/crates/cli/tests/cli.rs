use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn etes(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etes"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = etes(&["run", "--scenario", "scalar_smoke", "--horizon", "2", "--plot"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "events.csv", "averaged.csv", "report.txt", "report.json", "scenario.toml", "plot.py"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let traj = read(&dir.path().join("trajectory.csv"));
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "t,theta_1,y,theta_hat_1,Ghat_1,u_1,Gamma_11,margin");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 8);
    assert_eq!(first[0], "0.0000000000000000e0");
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("report.json"))).unwrap();
    assert_eq!(json["scenarios"][0]["name"], "scalar_smoke");
    assert_eq!(json["scenarios"][0]["t_end"], 2.0);
    assert_eq!(json["scenarios"][0]["outcome"]["status"], "completed");
}

#[test]
fn echoed_scenario_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(etes(&["run", "scalar_smoke", "--horizon", "1"], a.path()).status.success());
    let echo = a.path().join("scenario.toml");
    assert!(etes(&["run", echo.to_str().unwrap()], b.path()).status.success());
    assert_eq!(read(&a.path().join("trajectory.csv")), read(&b.path().join("trajectory.csv")));
}

#[test]
fn compare_writes_table_and_flags_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = etes(
        &["compare", "--scenario", "paper_sec6_newton", "--scenario", "paper_sec6_gradient", "--horizon", "5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(etes_cli::EXIT_DIVERGED));
    let table = read(&dir.path().join("comparison.csv"));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "scenario,scheme,completed,update_count,convergence_time,envelopes_passed");
    assert!(rows[1].starts_with("paper_sec6_newton,newton_et,true,"));
    assert!(rows[2].starts_with("paper_sec6_gradient,gradient_et,false,"));
    assert!(dir.path().join("paper_sec6_gradient/trajectory.csv").is_file());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = etes(
        &["sweep", "scalar_smoke", "--horizon", "1", "--param", "sigma", "--start", "0.25", "--stop", "0.75", "--count", "3"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("sweep.csv"));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("sigma,completed,update_count"));
    assert!(rows[2].starts_with("5.0000000000000000e-1,true,"));
}

#[test]
fn invalid_inputs_fail_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let src = include_str!("../scenarios/paper_sec6_newton.toml").replace("sigma = 0.75", "sigma = 1.5");
    fs::write(&bad, src).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_etes")).args(["validate"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("bad.toml:") && stdout.contains("sigma must lie in (0,1)"), "{stdout}");

    let o = etes(&["run", "scalar_smoke", "--step", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("h"));
}

#[test]
fn zero_horizon_gives_header_plus_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = etes(&["run", "scalar_smoke", "--horizon", "0", "--plot"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&dir.path().join("trajectory.csv")).lines().count(), 2);
    assert!(read(&dir.path().join("plot.py")).contains("# warning: scalar_smoke"));
}
