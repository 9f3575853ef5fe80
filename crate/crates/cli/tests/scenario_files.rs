use etes_cli::scenario_file::{emit_scenario, parse_scenario, parse_scenario_str, ScenarioError, BUNDLED};
use etes_core::signals::parse_multiplier;
use etes_core::{ControllerGains, DitherDesign, Scenario, Scheme, TriggerConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const NEWTON: &str = include_str!("../scenarios/paper_sec6_newton.toml");

fn round_trip(s: &Scenario) -> Scenario {
    parse_scenario_str(&emit_scenario(s), "<emitted>", "x").unwrap()
}

#[test]
fn bundled_scenarios_round_trip() {
    for (name, _) in BUNDLED {
        let s = parse_scenario(name).unwrap();
        assert_eq!(round_trip(&s), s, "{name}");
    }
}

#[test]
fn emitted_file_is_stable() {
    let s = parse_scenario("scalar_smoke").unwrap();
    let text = emit_scenario(&s);
    assert_eq!(emit_scenario(&round_trip(&s)), text);
}

fn line_of(source: &str, needle: &str) -> usize {
    source.lines().position(|l| l.trim_start().starts_with(needle)).unwrap() + 1
}

#[test]
fn out_of_range_sigma_names_field_rule_and_line() {
    let src = NEWTON.replace("sigma = 0.75", "sigma = 1.5");
    let err = parse_scenario_str(&src, "bad.toml", "bad").unwrap_err();
    let msg = err.to_string();
    let line = line_of(&src, "sigma");
    assert!(msg.contains(&format!("bad.toml:{line}:")), "{msg}");
    assert!(msg.contains("`sigma`") && msg.contains("(0,1)"), "{msg}");
}

#[test]
fn resonant_multipliers_name_the_clause() {
    let src = NEWTON.replace(r#"["1", "7"]"#, r#"["1", "3"]"#);
    assert_ne!(src, NEWTON);
    let msg = parse_scenario_str(&src, "bad.toml", "bad").unwrap_err().to_string();
    assert!(msg.contains(&format!("bad.toml:{}:", line_of(&src, "multipliers"))), "{msg}");
    assert!(msg.contains("w'_i = w'_j + 2w'_k"), "{msg}");
}

#[test]
fn wrong_lengths_and_bad_values_are_rejected() {
    let cases = [
        ("thetastar = [2.0, 4.0]", "thetastar = [2.0, 4.0, 1.0]", "Hstar"),
        ("K = [1.0, 1.0]", "K = [1.0, -1.0]", "K"),
        ("theta_hat0 = [2.5, 5.0]", "theta_hat0 = [2.5]", "theta_hat0"),
        ("omega = 1.0", "omega = -1.0", "omega"),
        ("alpha = 0.8", "alpha = 0.0", "alpha"),
    ];
    for (from, to, field) in cases {
        let src = NEWTON.replace(from, to);
        assert_ne!(src, NEWTON, "{from}");
        let msg = parse_scenario_str(&src, "f.toml", "f").unwrap_err().to_string();
        assert!(msg.contains(field), "{to}: {msg}");
    }
}

#[test]
fn unknown_keys_and_names_are_errors() {
    let src = NEWTON.replace("omega_r = 0.01", "omega_r = 0.01\nomega_x = 1.0");
    assert!(matches!(parse_scenario_str(&src, "f.toml", "f"), Err(ScenarioError::Syntax { .. })));
    let msg = parse_scenario("no_such_scenario").unwrap_err().to_string();
    assert!(msg.contains("paper_sec6_newton"), "{msg}");
}

#[test]
fn omitted_fields_take_defaults() {
    let src = "[map]\nQstar = 1.0\nHstar = [[2.0]]\nthetastar = [0.0]\n\
               [dither]\namplitudes = [0.1]\nmultipliers = [\"1\"]\nomega = 2.0\n\
               [controller]\nscheme = \"newton_et\"\nK = [1.0]\n\
               [trigger]\nsigma = 0.5\nalpha = 1.0\n\
               [init]\ntheta_hat0 = [0.5]\n";
    let s = parse_scenario_str(src, "min.toml", "min").unwrap();
    assert_eq!(s.name, "min");
    assert_eq!(s.h, etes_core::sim::default_step(&s.design));
    assert_eq!(s.t_end, etes_core::sim::DEFAULT_HORIZON);
    assert_eq!(s.gamma0, DMatrix::identity(1, 1) * etes_core::sim::DEFAULT_GAMMA0);
}

fn scenario_from(q: f64, h: [f64; 3], theta: [f64; 2], a: [f64; 2], k: [f64; 2], sigma: f64, gamma: f64) -> Option<Scenario> {
    let hs = DMatrix::from_row_slice(2, 2, &[h[0], h[1], h[1], h[2]]);
    let map = etes_core::QuadraticMap::new(q, hs, DVector::from_row_slice(&theta)).ok()?;
    let m = vec![parse_multiplier("1").ok()?, parse_multiplier("7/3").ok()?];
    let mut s = Scenario::benchmark_newton();
    s.name = "generated".into();
    s.map = map;
    s.design = DitherDesign::new(a.to_vec(), m, 1.5).ok()?;
    s.gains = ControllerGains::new(DVector::from_row_slice(&k), Scheme::NewtonEt).ok()?;
    s.trigger = TriggerConfig::new(sigma, 0.8).ok()?;
    s.gamma0 = DMatrix::identity(2, 2) * gamma;
    s.h = etes_core::sim::default_step(&s.design);
    s.validate().ok()?;
    Some(s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_scenarios_round_trip(
        q in -1e3f64..1e3,
        d in 0.5f64..200.0, off in -0.4f64..0.4, e in 0.5f64..200.0,
        t1 in -10.0f64..10.0, t2 in -10.0f64..10.0,
        a1 in 1e-3f64..1.0, a2 in 1e-3f64..1.0,
        k1 in 0.1f64..5.0, k2 in 0.1f64..5.0,
        sigma in 0.01f64..0.99, gamma in 1e-6f64..1.0,
    ) {
        let h = [d, off * (d * e).sqrt(), e];
        if let Some(s) = scenario_from(q, h, [t1, t2], [a1, a2], [k1, k2], sigma, gamma) {
            prop_assert_eq!(round_trip(&s), s);
        }
    }
}
