//! Workloads shared by the benchmarks.

use etes_core::Scenario;

/// The benchmark Newton scenario cut to `t_end` seconds.
pub fn newton_for(t_end: f64) -> Scenario {
    let mut s = Scenario::benchmark_newton();
    s.t_end = t_end;
    s
}
