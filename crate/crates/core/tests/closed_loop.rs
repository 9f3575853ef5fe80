use etes_core::analysis::{run_averaged, AveragedVariant};
use etes_core::estimators::RiccatiFilter;
use etes_core::trigger::trigger_margin;
use etes_core::{simulate, ControllerGains, Outcome, Scenario, Scheme, TriggerConfig, TriggerState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn short(mut s: Scenario, t_end: f64) -> Scenario {
    s.t_end = t_end;
    s.stride = 1;
    s
}

#[test]
fn runs_are_bit_identical() {
    let s = short(Scenario::benchmark_newton(), 20.0);
    let a = simulate(&s, |_| {}).unwrap();
    let b = simulate(&s, |_| {}).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.events, b.events);
    assert_eq!(a.summary, b.summary);
}

#[test]
fn held_input_is_constant_between_events() {
    for s in [Scenario::benchmark_newton(), Scenario::benchmark_gradient()] {
        let out = simulate(&short(s, 10.0), |_| {}).unwrap();
        let times = out.events.times();
        let recs = &out.trajectory.records;
        for w in recs.windows(2) {
            let fired = times.iter().any(|&t| t > w[0].t && t <= w[1].t);
            if !fired {
                assert_eq!(w[0].u, w[1].u, "u changed without an event at t={}", w[1].t);
            }
        }
    }
}

#[test]
fn trigger_margin_is_sound_at_every_step() {
    let s = short(Scenario::benchmark_newton(), 30.0);
    let mut worst = f64::INFINITY;
    let mut resets = Vec::new();
    let out = simulate(&s, |info| {
        if info.events == 0 {
            worst = worst.min(info.margin_before);
        } else {
            resets.push(info.error_norm);
        }
    })
    .unwrap();
    assert!(worst >= -1e-9, "non-event margin {worst}");
    assert!(resets.iter().all(|e| *e == 0.0));
    assert!(out.events.count() > 1);
}

#[test]
fn first_event_is_at_zero_and_times_increase() {
    let out = simulate(&short(Scenario::benchmark_newton(), 10.0), |_| {}).unwrap();
    let t = out.events.times();
    assert_eq!(t[0], 0.0);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!(out.summary.min_inter_event.unwrap() > 0.0);
}

#[test]
fn continuous_schemes_update_every_step() {
    let mut s = short(Scenario::benchmark_newton(), 0.5);
    s.gains = ControllerGains::new(DVector::from_element(2, 1.0), Scheme::NewtonContinuous).unwrap();
    let out = simulate(&s, |_| {}).unwrap();
    assert_eq!(out.events.count(), 1);
    assert!(out.trajectory.records.iter().all(|r| r.margin.is_nan()));
    let changes = out.trajectory.records.windows(2).filter(|w| w[0].u != w[1].u).count();
    assert!(changes + 2 >= out.trajectory.len());
}

#[test]
fn gradient_records_have_no_gamma() {
    let out = simulate(&short(Scenario::benchmark_gradient(), 0.05), |_| {}).unwrap();
    assert!(out.trajectory.records.iter().all(|r| r.gamma.is_empty()));
    assert!(out.final_state.gamma.is_none());
}

#[test]
fn riccati_ceiling_stops_the_run_with_partial_output() {
    let mut s = Scenario::benchmark_newton();
    s.gamma0 = DMatrix::identity(2, 2) * 0.05;
    s.omega_r = 1.0;
    let out = simulate(&s, |_| {}).unwrap();
    match &out.summary.outcome {
        Outcome::Diverged { t, reason } => {
            assert!(*t < s.t_end);
            assert!(reason.contains("ceiling"), "{reason}");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    assert!(!out.trajectory.is_empty());
    assert!(etes_core::run(&s).is_err());
}

#[test]
fn default_newton_run_stays_bounded() {
    let out = simulate(&Scenario::benchmark_newton(), |_| {}).unwrap();
    assert_eq!(out.summary.outcome, Outcome::Completed);
    assert!(out.summary.final_theta_hat_error < 1.118);
}

/// Fourth-order Runge–Kutta on the Riccati flow with `Ĥ ≡ H*`.
fn riccati_path(gamma0: DMatrix<f64>, h_star: &DMatrix<f64>, omega_r: f64, dt: f64, steps: usize) -> Vec<DMatrix<f64>> {
    let f = RiccatiFilter::new(omega_r).unwrap();
    let mut g = gamma0;
    let mut out = vec![g.clone()];
    for _ in 0..steps {
        let k1 = f.rhs(&g, h_star);
        let k2 = f.rhs(&(&g + &k1 * (dt / 2.0)), h_star);
        let k3 = f.rhs(&(&g + &k2 * (dt / 2.0)), h_star);
        let k4 = f.rhs(&(&g + &k3 * dt), h_star);
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(g.clone());
    }
    out
}

#[test]
fn riccati_converges_to_inverse_hessian() {
    let h = DMatrix::from_row_slice(2, 2, &[100.0, 30.0, 30.0, 20.0]);
    let hinv = h.clone().try_inverse().unwrap();
    let eps = 1e-3;
    let dt = 1e-3;
    let path = riccati_path(&hinv + DMatrix::identity(2, 2) * eps, &h, 1.0, dt, 5000);
    for (k, g) in path.iter().enumerate() {
        let t = k as f64 * dt;
        let err = (g - &hinv).norm();
        assert!(err <= 1.05 * eps * 2f64.sqrt() * (-t).exp(), "t={t}: {err}");
    }
}

#[test]
fn averaged_continuous_newton_matches_matrix_exponential() {
    // Linearized averaged loop with Γ̃ = 0 and continuous updates:
    // θ̃(t) = exp(−Kt) θ̃(0).
    let mut s = Scenario::benchmark_newton();
    s.gains = ControllerGains::new(DVector::from_vec(vec![1.0, 2.5]), Scheme::NewtonContinuous).unwrap();
    s.gamma0 = s.map.h_star_inverse().unwrap();
    s.t_end = 5.0;
    s.h = 1e-3;
    s.stride = 50;
    let avg = run_averaged(&s, AveragedVariant::Linearized).unwrap();
    let theta0 = &s.theta_hat0 - s.map.theta_star();
    for r in &avg.records {
        for i in 0..2 {
            let k = s.gains.k_diag()[i];
            let want = s.map.theta_star()[i] + (-k * r.t).exp() * theta0[i];
            assert!((r.theta_hat[i] - want).abs() < 1e-8, "t={} i={i}", r.t);
        }
    }
}

/// Starting on the extremum with the exact inverse Hessian should leave only
/// dither-scale ripple. The instantaneous Hessian estimate carries the
/// `N(t)·Q*` term (about 8e4 at t=0), which drives the Riccati state to
/// finite-time blow-up long before averaging applies.
#[test]
#[ignore = "fails: the N(t)·Q* term blows up the Riccati state within 0.02 s"]
fn extremum_start_stays_within_dither_scale() {
    let mut s = Scenario::benchmark_newton();
    s.theta_hat0 = s.map.theta_star().clone();
    s.gamma0 = s.map.h_star_inverse().unwrap();
    let out = simulate(&s, |_| {}).unwrap();
    assert_eq!(out.summary.outcome, Outcome::Completed);
    for r in &out.trajectory.records {
        let d: f64 = r.theta_hat.iter().zip(s.map.theta_star().iter()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(d.sqrt() <= 3.0 * s.design.rss_amplitude());
    }
}

/// Halving the step moves sample-based event times by O(h); with several
/// hundred ripple-driven events the trajectories separate far beyond 1e-5.
#[test]
#[ignore = "fails: O(h) event-time shifts separate the runs by about 0.2"]
fn step_halving_agrees_over_ten_seconds() {
    let s = short(Scenario::benchmark_newton(), 10.0);
    let mut s2 = s.clone();
    s2.h /= 2.0;
    s2.stride = 2;
    let a = simulate(&s, |_| {}).unwrap();
    let b = simulate(&s2, |_| {}).unwrap();
    for (x, y) in a.trajectory.records.iter().zip(&b.trajectory.records) {
        for i in 0..2 {
            assert!((x.theta_hat[i] - y.theta_hat[i]).abs() < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_after_fire_is_sigma_norm(z in prop::collection::vec(-10.0f64..10.0, 1..5), sigma in 0.01f64..0.99, alpha in 0.01f64..5.0) {
        let cfg = TriggerConfig::new(sigma, alpha).unwrap();
        let z = DVector::from_vec(z);
        let mut state = TriggerState::new(DVector::zeros(z.len()), 0.0);
        let mut log = etes_core::EventLog::new();
        state.fire(&z, 1.0, &mut log).unwrap();
        prop_assert_eq!(state.error(&z), DVector::zeros(z.len()));
        prop_assert!((trigger_margin(&z, &state, &cfg) - sigma * z.norm()).abs() <= 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn newton_loop_is_deterministic(theta0 in 0.5f64..1.5, k in 0.5f64..2.0) {
        let mut s = etes_core::Scenario::benchmark_newton();
        s.t_end = 0.5;
        s.theta_hat0 = DVector::from_vec(vec![2.0 + theta0, 4.0]);
        s.gains = ControllerGains::new(DVector::from_element(2, k), Scheme::NewtonEt).unwrap();
        let a = simulate(&s, |_| {}).unwrap();
        let b = simulate(&s, |_| {}).unwrap();
        prop_assert_eq!(a.trajectory, b.trajectory);
    }
}
