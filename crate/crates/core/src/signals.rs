//! Sinusoidal probing: the dither `S(t)`, the demodulation vector `M(t)`, the
//! Hessian probe `N(t)`, and the exact-rational frequency structure behind
//! them.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact frequency multiplier `ω'_i`.
pub type Multiplier = Rational64;

/// Parses `"p/q"` or `"p"` into an exact multiplier.
pub fn parse_multiplier(text: &str) -> Result<Multiplier> {
    let text = text.trim();
    let parse = |s: &str| {
        s.trim()
            .parse::<i64>()
            .map_err(|_| Error::invalid("multipliers", format!("`{text}` is not a rational p/q")))
    };
    match text.split_once('/') {
        Some((p, q)) => {
            let (p, q) = (parse(p)?, parse(q)?);
            if q == 0 {
                return Err(Error::invalid("multipliers", format!("`{text}` has a zero denominator")));
            }
            Ok(Rational64::new(p, q))
        }
        None => Ok(Rational64::from_integer(parse(text)?)),
    }
}

pub fn format_multiplier(m: &Multiplier) -> String {
    if m.is_integer() {
        m.numer().to_string()
    } else {
        format!("{}/{}", m.numer(), m.denom())
    }
}

/// The resonance relations excluded for every probing multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// `ω'_i = ω'_j`
    Equal,
    /// `ω'_i = (ω'_j + ω'_k)/2`
    Midpoint,
    /// `ω'_i = ω'_j + 2ω'_k`
    PlusDouble,
    /// `ω'_i = ω'_k + ω'_l`
    Sum,
    /// `ω'_i = ω'_k − ω'_l`
    Difference,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::Equal => "w'_i = w'_j",
            Clause::Midpoint => "w'_i = (w'_j + w'_k)/2",
            Clause::PlusDouble => "w'_i = w'_j + 2w'_k",
            Clause::Sum => "w'_i = w'_k + w'_l",
            Clause::Difference => "w'_i = w'_k - w'_l",
        })
    }
}

/// One violated tuple. Indices are one-based, as in the reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub clause: Clause,
    pub i: usize,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} with (i={}", self.clause, self.i)?;
        for (name, idx) in [("j", self.j), ("k", self.k), ("l", self.l)] {
            if let Some(idx) = idx {
                write!(f, ", {name}={idx}")?;
            }
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exhaustively checks the resonance exclusions over exact rationals.
///
/// All index tuples are enumerated, repeated indices included. Tuples where a
/// clause is an identity by construction are skipped: `j = i` for
/// [`Clause::Equal`], `j = k = i` for [`Clause::Midpoint`] and `k = l` for
/// [`Clause::Difference`].
pub fn check_probing_frequencies(multipliers: &[Multiplier]) -> Result<ValidationReport> {
    if multipliers.is_empty() {
        return Err(Error::Empty("multipliers"));
    }
    for (idx, m) in multipliers.iter().enumerate() {
        if *m <= Multiplier::zero() {
            return Err(Error::invalid(
                "multipliers",
                format!("multiplier {} (`{}`) must be positive", idx + 1, format_multiplier(m)),
            ));
        }
    }
    for i in 0..multipliers.len() {
        for j in i + 1..multipliers.len() {
            if multipliers[i] == multipliers[j] {
                return Err(Error::invalid(
                    "multipliers",
                    format!(
                        "duplicate multiplier `{}` at positions {} and {}",
                        format_multiplier(&multipliers[i]),
                        i + 1,
                        j + 1
                    ),
                ));
            }
        }
    }

    let n = multipliers.len();
    let w = multipliers;
    let two = Multiplier::from_integer(2);
    let mut violations = Vec::new();
    let hit = |clause, i: usize, j: Option<usize>, k: Option<usize>, l: Option<usize>| Violation {
        clause,
        i: i + 1,
        j: j.map(|x| x + 1),
        k: k.map(|x| x + 1),
        l: l.map(|x| x + 1),
    };

    for i in 0..n {
        for j in 0..n {
            if j != i && w[i] == w[j] {
                violations.push(hit(Clause::Equal, i, Some(j), None, None));
            }
        }
        for j in 0..n {
            for k in j..n {
                if j == i && k == i {
                    continue;
                }
                if w[i] * two == w[j] + w[k] {
                    violations.push(hit(Clause::Midpoint, i, Some(j), Some(k), None));
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                if w[i] == w[j] + two * w[k] {
                    violations.push(hit(Clause::PlusDouble, i, Some(j), Some(k), None));
                }
            }
        }
        for k in 0..n {
            for l in k..n {
                if w[i] == w[k] + w[l] {
                    violations.push(hit(Clause::Sum, i, None, Some(k), Some(l)));
                }
            }
        }
        for k in 0..n {
            for l in 0..n {
                if k != l && w[i] == w[k] - w[l] {
                    violations.push(hit(Clause::Difference, i, None, Some(k), Some(l)));
                }
            }
        }
    }
    Ok(ValidationReport { violations })
}

/// Amplitudes, exact multipliers and base frequency of the probing signals.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherDesign {
    amplitudes: Vec<f64>,
    multipliers: Vec<Multiplier>,
    omega: f64,
    omegas: Vec<f64>,
    period_factor: Multiplier,
}

impl DitherDesign {
    /// Validates nonzero amplitudes, positive distinct multipliers and a
    /// positive base frequency. Resonance clauses are checked separately by
    /// [`check_probing_frequencies`].
    pub fn new(amplitudes: Vec<f64>, multipliers: Vec<Multiplier>, omega: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Empty("amplitudes"));
        }
        if amplitudes.len() != multipliers.len() {
            return Err(Error::Dimension {
                what: "multipliers",
                expected: amplitudes.len(),
                got: multipliers.len(),
            });
        }
        for (i, a) in amplitudes.iter().enumerate() {
            if !a.is_finite() || *a == 0.0 {
                return Err(Error::invalid(
                    "amplitudes",
                    format!("amplitude {} must be finite and nonzero, got {a}", i + 1),
                ));
            }
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
        }
        // Positivity and distinctness; the clause list itself is not enforced here.
        check_probing_frequencies(&multipliers)?;

        let period_factor = period_factor(&multipliers);
        let omegas = multipliers.iter().map(|m| rational_to_f64(m) * omega).collect();
        Ok(Self {
            amplitudes,
            multipliers,
            omega,
            omegas,
            period_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn multipliers(&self) -> &[Multiplier] {
        &self.multipliers
    }

    /// Base frequency ω (rad/s).
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Channel frequencies ω_i = ω'_i·ω (rad/s).
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// `LCM{1/ω'_i}`, exact. The common period is `2π/ω` times this.
    pub fn period_factor(&self) -> Multiplier {
        self.period_factor
    }

    /// Common period `T = 2π·LCM{1/ω_i}`.
    pub fn common_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega * rational_to_f64(&self.period_factor)
    }

    /// Root-sum-square amplitude `a`.
    pub fn rss_amplitude(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Period of the fastest channel, `2π/max ω_i`.
    pub fn fastest_period(&self) -> f64 {
        let fastest = self.omegas.iter().cloned().fold(0.0, f64::max);
        2.0 * std::f64::consts::PI / fastest
    }

    /// Copy of the design with a different base frequency.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.amplitudes.clone(), self.multipliers.clone(), omega)
    }

    /// `S_i(t) = a_i sin(ω_i t)`.
    pub fn dither(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.amplitudes
                .iter()
                .zip(&self.omegas)
                .map(|(a, w)| a * (w * t).sin()),
        )
    }

    /// `M_i(t) = (2/a_i) sin(ω_i t)`.
    pub fn demod(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.amplitudes
                .iter()
                .zip(&self.omegas)
                .map(|(a, w)| 2.0 / a * (w * t).sin()),
        )
    }

    /// `N_ii(t) = −(8/a_i²) cos(2ω_i t)`,
    /// `N_ij(t) = (2/(a_i a_j)) [cos((ω_i−ω_j)t) − cos((ω_i+ω_j)t)]`.
    pub fn hessian_probe(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let a = &self.amplitudes;
        let w = &self.omegas;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = -8.0 / (a[i] * a[i]) * (2.0 * w[i] * t).cos();
            for j in i + 1..n {
                let v = 2.0 / (a[i] * a[j]) * (((w[i] - w[j]) * t).cos() - ((w[i] + w[j]) * t).cos());
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

pub(crate) fn rational_to_f64(r: &Multiplier) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `LCM{1/ω'_i}` where the LCM of rationals `p/q` is `LCM(p)/GCD(q)`.
fn period_factor(multipliers: &[Multiplier]) -> Multiplier {
    // 1/ω'_i = q_i/p_i
    let numer_lcm = multipliers.iter().fold(1_i64, |acc, m| acc.lcm(m.denom()));
    let denom_gcd = multipliers.iter().fold(0_i64, |acc, m| acc.gcd(m.numer()));
    Multiplier::new(numer_lcm, denom_gcd.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn ints(v: &[i64]) -> Vec<Multiplier> {
        v.iter().map(|&x| Multiplier::from_integer(x)).collect()
    }

    fn benchmark() -> DitherDesign {
        DitherDesign::new(vec![0.1, 0.1], ints(&[1, 7]), 1.0).unwrap()
    }

    #[test]
    fn one_and_seven_pass() {
        assert!(check_probing_frequencies(&ints(&[1, 7])).unwrap().passed());
    }

    #[test]
    fn one_and_three_hit_plus_double() {
        let report = check_probing_frequencies(&ints(&[1, 3])).unwrap();
        assert!(!report.passed());
        assert!(report.violations.contains(&Violation {
            clause: Clause::PlusDouble,
            i: 2,
            j: Some(1),
            k: Some(1),
            l: None,
        }));
    }

    #[test]
    fn duplicates_and_non_positive_rejected() {
        assert!(matches!(
            check_probing_frequencies(&ints(&[1, 1])),
            Err(Error::Invalid { .. })
        ));
        assert!(check_probing_frequencies(&ints(&[1, 0])).is_err());
        assert!(check_probing_frequencies(&ints(&[-2, 5])).is_err());
        assert!(check_probing_frequencies(&[]).is_err());
    }

    #[test]
    fn single_channel_never_hits_tautologies() {
        assert!(check_probing_frequencies(&ints(&[3])).unwrap().passed());
    }

    #[test]
    fn parse_and_format_rationals() {
        assert_eq!(parse_multiplier("7").unwrap(), Multiplier::from_integer(7));
        assert_eq!(parse_multiplier(" 3/2 ").unwrap(), Multiplier::new(3, 2));
        assert_eq!(parse_multiplier("6/4").unwrap(), Multiplier::new(3, 2));
        assert!(parse_multiplier("1/0").is_err());
        assert!(parse_multiplier("1.5").is_err());
        assert_eq!(format_multiplier(&Multiplier::new(3, 2)), "3/2");
        assert_eq!(format_multiplier(&Multiplier::from_integer(7)), "7");
    }

    #[test]
    fn common_periods() {
        assert_relative_eq!(benchmark().common_period(), 2.0 * PI, epsilon = 1e-15);
        let single = DitherDesign::new(vec![1.0], ints(&[1]), 2.0).unwrap();
        assert_relative_eq!(single.common_period(), PI, epsilon = 1e-15);
        let two_three = DitherDesign::new(vec![0.1, 0.1], ints(&[2, 3]), 1.0).unwrap();
        assert_relative_eq!(two_three.common_period(), 2.0 * PI, epsilon = 1e-15);
        let halves = DitherDesign::new(vec![0.1, 0.1], vec![Multiplier::new(1, 2), Multiplier::new(3, 4)], 1.0).unwrap();
        // LCM{2, 4/3} = 4
        assert_eq!(halves.period_factor(), Multiplier::from_integer(4));
    }

    #[test]
    fn signal_point_values() {
        let d = benchmark();
        assert_eq!(d.dither(0.0), DVector::zeros(2));
        assert_eq!(d.demod(0.0), DVector::zeros(2));
        let s = d.dither(PI / 2.0);
        assert_relative_eq!(s[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(s[1], -0.1, epsilon = 1e-15);
        let m = d.demod(PI / 2.0);
        assert_relative_eq!(m[0], 20.0, epsilon = 1e-12);
        assert_relative_eq!(m[1], -20.0, epsilon = 1e-12);
        let n0 = d.hessian_probe(0.0);
        assert_relative_eq!(n0[(0, 0)], -800.0, epsilon = 1e-10);
        assert_relative_eq!(n0[(1, 1)], -800.0, epsilon = 1e-10);
        assert_eq!(n0[(0, 1)], 0.0);
        assert_eq!(n0[(1, 0)], 0.0);
    }

    #[test]
    fn probe_diagonal_vanishes_at_quarter_period() {
        let d = DitherDesign::new(vec![1.0], ints(&[1]), 1.0).unwrap();
        // 2ω₁t = π/2
        assert!(d.hessian_probe(PI / 4.0)[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn dither_norm_bounded_by_rss() {
        let d = DitherDesign::new(vec![0.1, -0.3, 0.2], ints(&[1, 7, 19]), 1.3).unwrap();
        for k in 0..500 {
            let t = 0.037 * k as f64;
            assert!(d.dither(t).norm() <= d.rss_amplitude() + 1e-15);
        }
    }

    #[test]
    fn signals_repeat_after_common_period() {
        let d = DitherDesign::new(vec![0.1, 0.2], vec![Multiplier::new(1, 2), Multiplier::new(7, 3)], 1.5).unwrap();
        let period = d.common_period();
        for k in 0..50 {
            let t = 0.2 * k as f64;
            assert_relative_eq!(d.dither(t), d.dither(t + period), epsilon = 1e-12);
            assert_relative_eq!(d.demod(t), d.demod(t + period), epsilon = 1e-11);
            assert_relative_eq!(d.hessian_probe(t), d.hessian_probe(t + period), epsilon = 1e-9);
        }
    }

    #[test]
    fn design_rejects_bad_inputs() {
        assert!(DitherDesign::new(vec![0.0, 0.1], ints(&[1, 7]), 1.0).is_err());
        assert!(DitherDesign::new(vec![0.1], ints(&[1, 7]), 1.0).is_err());
        assert!(DitherDesign::new(vec![0.1, 0.1], ints(&[1, 7]), 0.0).is_err());
        assert!(DitherDesign::new(vec![0.1, 0.1], ints(&[7, 7]), 1.0).is_err());
    }
}
