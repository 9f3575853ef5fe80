//! Verification mathematics: Lyapunov certificates, the averaged closed loop,
//! stability envelopes and the full-versus-averaged gap.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::Scheme;
use crate::error::{Error, Result};
use crate::hybrid::{self, DriveConfig, HeldFlow, Snapshot};
use crate::linalg;
use crate::sim::{Scenario, Trajectory};
use crate::trigger::EventLog;

/// `AᵀP + PA + Q = 0` with `P = Pᵀ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Spectral norm of `AᵀP + PA + Q`.
    pub residual: f64,
}

impl LyapunovCertificate {
    pub fn p_eigen(&self) -> Result<linalg::SymmetricEigen> {
        linalg::symmetric_eigen(&self.p)
    }

    pub fn q_eigen(&self) -> Result<linalg::SymmetricEigen> {
        linalg::symmetric_eigen(&self.q)
    }
}

/// Solves the Lyapunov equation through its Kronecker form
/// `(I⊗Aᵀ + Aᵀ⊗I) vec(P) = −vec(Q)`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovCertificate> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension {
            what: "Lyapunov A (square)",
            expected: n,
            got: a.ncols(),
        });
    }
    if q.shape() != (n, n) {
        return Err(Error::Dimension {
            what: "Lyapunov Q",
            expected: n,
            got: q.nrows(),
        });
    }
    if !linalg::is_symmetric(q, 1e-12 * q.norm().max(1.0)) || linalg::symmetric_eigen(q)?.min() <= 0.0 {
        return Err(Error::invalid("Q", "must be symmetric positive definite"));
    }
    linalg::ensure_hurwitz(a, "Lyapunov A")?;

    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let vec_p = system.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov system"))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let residual = linalg::spectral_norm(&(&at * &p + &p * a + q));
    if linalg::symmetric_eigen(&p)?.min() <= 0.0 {
        return Err(Error::invalid("P", "Lyapunov solution is not positive definite"));
    }
    Ok(LyapunovCertificate {
        a: a.clone(),
        q: q.clone(),
        p,
        residual,
    })
}

/// `2‖P₁KH*‖/λ_min(Q)`.
pub fn alpha_lower_bound(cert: &LyapunovCertificate, k: &DMatrix<f64>, h_star: &DMatrix<f64>) -> Result<f64> {
    let q_min = cert.q_eigen()?.min();
    Ok(2.0 * linalg::spectral_norm(&(&cert.p * k * h_star)) / q_min)
}

/// Largest distance between the sorted spectra of `H*KH*⁻¹` and `K`.
pub fn similarity_spectrum_gap(k: &DMatrix<f64>, h_star: &DMatrix<f64>) -> Result<f64> {
    let hinv = h_star.clone().try_inverse().ok_or(Error::Singular("Hstar inverse"))?;
    let similar = linalg::eigenvalues(&(h_star * k * hinv));
    let base = linalg::eigenvalues(k);
    Ok(similar
        .iter()
        .zip(&base)
        .map(|(x, y)| (x.0 - y.0).hypot(x.1 - y.1))
        .fold(0.0, f64::max))
}

/// Both certificates a Newton scenario needs: `A = −K` and
/// `A = H*(−K)H*⁻¹`, each with `Q = I`.
#[derive(Debug, Clone)]
pub struct NewtonCertificates {
    pub p1: LyapunovCertificate,
    pub p2: LyapunovCertificate,
    pub alpha_min: f64,
    pub spectrum_gap: f64,
}

pub fn newton_certificates(scenario: &Scenario) -> Result<NewtonCertificates> {
    let n = scenario.dim();
    let k = scenario.gains.k_matrix();
    let h = scenario.map.h_star();
    let hinv = scenario.map.h_star_inverse()?;
    let q = DMatrix::identity(n, n);
    let p1 = solve_lyapunov(&(-&k), &q)?;
    let p2 = solve_lyapunov(&(h * (-&k) * hinv), &q)?;
    let alpha_min = alpha_lower_bound(&p1, &k, h)?;
    let spectrum_gap = similarity_spectrum_gap(&k, h)?;
    Ok(NewtonCertificates {
        p1,
        p2,
        alpha_min,
        spectrum_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragedVariant {
    Nonlinear,
    Linearized,
}

/// Error coordinates of the averaged Newton loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedState {
    pub ghat: DVector<f64>,
    pub theta_tilde: DVector<f64>,
    pub gamma_tilde: DMatrix<f64>,
    /// Held `θ̃_av` at the last event minus the current `θ̃_av`.
    pub e: DVector<f64>,
}

impl AveragedState {
    pub fn zeros(n: usize) -> Self {
        Self {
            ghat: DVector::zeros(n),
            theta_tilde: DVector::zeros(n),
            gamma_tilde: DMatrix::zeros(n, n),
            e: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDerivative {
    pub ghat: DVector<f64>,
    pub theta_tilde: DVector<f64>,
    pub gamma_tilde: DMatrix<f64>,
}

/// Derivative with respect to the rescaled time `t̄ = ωt`.
pub fn averaged_rhs(
    s: &AveragedState,
    k: &DMatrix<f64>,
    h_star: &DMatrix<f64>,
    h_star_inv: &DMatrix<f64>,
    omega: f64,
    omega_r: f64,
    variant: AveragedVariant,
) -> AveragedDerivative {
    let hk = h_star * k;
    let (ghat, theta_tilde, gamma_tilde) = match variant {
        AveragedVariant::Nonlinear => (
            (&hk * h_star_inv * &s.ghat + &hk * &s.gamma_tilde * &s.ghat + &hk * &s.e) / -omega,
            (k * &s.theta_tilde + k * &s.gamma_tilde * h_star * &s.theta_tilde + k * &s.e) / -omega,
            (&s.gamma_tilde + &s.gamma_tilde * h_star * &s.gamma_tilde) * (-omega_r / omega),
        ),
        AveragedVariant::Linearized => (
            (&hk * h_star_inv * &s.ghat + &hk * &s.e) / -omega,
            (k * &s.theta_tilde + k * &s.e) / -omega,
            &s.gamma_tilde * (-omega_r / omega),
        ),
    };
    AveragedDerivative {
        ghat,
        theta_tilde,
        gamma_tilde,
    }
}

/// One sampled row of an averaged run, mapped back to absolute coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedRecord {
    pub t: f64,
    /// `θ̃_av + θ*`
    pub theta_hat: Vec<f64>,
    pub ghat: Vec<f64>,
    /// Row-major `Γ̃_av + H*⁻¹`; empty for gradient schemes.
    pub gamma: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct AveragedRun {
    pub variant: AveragedVariant,
    pub records: Vec<AveragedRecord>,
    pub events: EventLog,
}

/// The averaged loop in original time. State `[Ĝ_av; θ̃_av; vec(Γ̃_av)]` for
/// Newton, `[θ̃_av]` for gradient schemes.
struct AveragedLoop {
    n: usize,
    scheme: Scheme,
    k: DMatrix<f64>,
    h: DMatrix<f64>,
    hinv: DMatrix<f64>,
    omega: f64,
    omega_r: f64,
    variant: AveragedVariant,
}

impl AveragedLoop {
    fn unpack(&self, x: &DVector<f64>, held: &DVector<f64>) -> AveragedState {
        let n = self.n;
        let theta_tilde = x.rows(n, n).into_owned();
        let e = if self.scheme.is_event_triggered() {
            held - &theta_tilde
        } else {
            DVector::zeros(n)
        };
        AveragedState {
            ghat: x.rows(0, n).into_owned(),
            gamma_tilde: DMatrix::from_column_slice(n, n, x.rows(2 * n, n * n).as_slice()),
            theta_tilde,
            e,
        }
    }
}

impl HeldFlow for AveragedLoop {
    fn rhs(&self, _t: f64, x: &DVector<f64>, held: &DVector<f64>) -> DVector<f64> {
        if !self.scheme.is_newton() {
            // dθ̃/dt = K·Ĝ_av with Ĝ_av = H*θ̃ held or live.
            let g = if self.scheme.is_event_triggered() {
                held.clone()
            } else {
                &self.h * x
            };
            return &self.k * g;
        }
        let s = self.unpack(x, held);
        let d = averaged_rhs(&s, &self.k, &self.h, &self.hinv, self.omega, self.omega_r, self.variant);
        let n = self.n;
        let mut dx = DVector::zeros(x.len());
        dx.rows_mut(0, n).copy_from(&(d.ghat * self.omega));
        dx.rows_mut(n, n).copy_from(&(d.theta_tilde * self.omega));
        dx.rows_mut(2 * n, n * n)
            .copy_from_slice((d.gamma_tilde * self.omega).as_slice());
        dx
    }

    fn decision(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        if self.scheme.is_newton() {
            x.rows(self.n, self.n).into_owned()
        } else {
            &self.h * x
        }
    }

    fn check(&self, t: f64, x: &DVector<f64>) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Diverged {
                t,
                reason: "non-finite averaged state".into(),
            })
        }
    }
}

/// Integrates the averaged loop of a scenario on the scenario's own grid,
/// with the averaged trigger `σ‖θ̃_av‖ − α‖e_av‖ < 0` (`σ‖Ĝ_av‖` for the
/// gradient schemes).
pub fn run_averaged(scenario: &Scenario, variant: AveragedVariant) -> Result<AveragedRun> {
    scenario.validate()?;
    let n = scenario.dim();
    let h = scenario.map.h_star().clone();
    let hinv = scenario.map.h_star_inverse()?;
    let theta_star = scenario.map.theta_star().clone();
    let scheme = scenario.scheme();
    let lp = AveragedLoop {
        n,
        scheme,
        k: scenario.gains.k_matrix(),
        h: h.clone(),
        hinv: hinv.clone(),
        omega: scenario.design.omega(),
        omega_r: scenario.omega_r,
        variant,
    };
    let theta0 = &scenario.theta_hat0 - &theta_star;
    let x0 = if scheme.is_newton() {
        let mut x = DVector::zeros(2 * n + n * n);
        x.rows_mut(0, n).copy_from(&(&h * &theta0));
        x.rows_mut(n, n).copy_from(&theta0);
        x.rows_mut(2 * n, n * n)
            .copy_from_slice((&scenario.gamma0 - &hinv).as_slice());
        x
    } else {
        theta0
    };
    let cfg = DriveConfig {
        h: scenario.h,
        t_end: scenario.t_end,
        trigger: scheme.is_event_triggered().then_some(scenario.trigger),
        refine_events: scenario.refine_events,
    };
    let stride = scenario.stride;
    let mut records = Vec::new();
    let mut last = None;
    let mut events = EventLog::new();
    let record = |k: usize, snap: &Snapshot<'_>| {
        let row = if scheme.is_newton() {
            AveragedRecord {
                t: snap.t,
                theta_hat: (snap.x.rows(n, n) + &theta_star).as_slice().to_vec(),
                ghat: snap.x.rows(0, n).as_slice().to_vec(),
                gamma: (DMatrix::from_column_slice(n, n, snap.x.rows(2 * n, n * n).as_slice()) + &hinv)
                    .transpose()
                    .as_slice()
                    .to_vec(),
                margin: snap.margin,
            }
        } else {
            AveragedRecord {
                t: snap.t,
                theta_hat: (snap.x + &theta_star).as_slice().to_vec(),
                ghat: (&h * snap.x).as_slice().to_vec(),
                gamma: Vec::new(),
                margin: snap.margin,
            }
        };
        if k.is_multiple_of(stride) {
            records.push(row.clone());
        }
        last = Some(row);
    };
    hybrid::drive(&lp, x0, cfg, &mut events, record, |_| {})?;
    let last = last.expect("initial record");
    if records.last().is_none_or(|r: &AveragedRecord| r.t != last.t) {
        records.push(last);
    }
    Ok(AveragedRun {
        variant,
        records,
        events,
    })
}

/// Sup-norm distances between a full run and its averaged counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingGap {
    pub theta_hat: f64,
    pub ghat: f64,
    pub gamma: Option<f64>,
    pub samples: usize,
}

fn vec_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compares every full-run sample with the averaged sample at the same or
/// the nearest earlier time.
pub fn averaging_gap(full: &Trajectory, avg: &[AveragedRecord]) -> Result<AveragingGap> {
    let mut gap = AveragingGap {
        theta_hat: 0.0,
        ghat: 0.0,
        gamma: None,
        samples: 0,
    };
    let tol = 1e-9;
    for r in &full.records {
        let idx = avg.partition_point(|a| a.t <= r.t + tol);
        if idx == 0 {
            continue;
        }
        let a = &avg[idx - 1];
        gap.theta_hat = gap.theta_hat.max(vec_dist(&r.theta_hat, &a.theta_hat));
        gap.ghat = gap.ghat.max(vec_dist(&r.ghat, &a.ghat));
        if !r.gamma.is_empty() && r.gamma.len() == a.gamma.len() {
            let d = linalg::spectral_norm(&DMatrix::from_row_slice(
                full.dim,
                full.dim,
                &r.gamma.iter().zip(&a.gamma).map(|(x, y)| x - y).collect::<Vec<_>>(),
            ));
            gap.gamma = Some(gap.gamma.map_or(d, |g: f64| g.max(d)));
        }
        gap.samples += 1;
    }
    if gap.samples == 0 {
        return Err(Error::Empty("overlap between full and averaged trajectories"));
    }
    Ok(gap)
}

/// Spectral data entering the stability envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub p1_min: f64,
    pub p1_max: f64,
    pub q_min: f64,
    pub sigma: f64,
    pub omega: f64,
    pub omega_r: f64,
    /// Euclidean norm of the dither amplitudes.
    pub a: f64,
    /// `λ_max((−1)^op H*)/λ_min((−1)^op H*)`
    pub h_condition: f64,
    pub h_norm: f64,
    pub h_inv_norm: f64,
}

impl EnvelopeParams {
    /// `λ_min(Q)/λ_max(P₁)·(1 − σ)`, the decay rate of `|y − Q*|`.
    pub fn rate(&self) -> f64 {
        self.q_min / self.p1_max * (1.0 - self.sigma)
    }

    pub fn p1_condition(&self) -> f64 {
        self.p1_max / self.p1_min
    }

    pub fn from_scenario(scenario: &Scenario, cert_p1: &LyapunovCertificate) -> Result<Self> {
        let p = cert_p1.p_eigen()?;
        let kind = scenario.map.extremum_kind()?;
        let signed = scenario.map.h_star() * kind.sign();
        let he = linalg::symmetric_eigen(&signed)?;
        let sigma = if scenario.scheme().is_event_triggered() {
            scenario.trigger.sigma()
        } else {
            0.0
        };
        Ok(Self {
            p1_min: p.min(),
            p1_max: p.max(),
            q_min: cert_p1.q_eigen()?.min(),
            sigma,
            omega: scenario.design.omega(),
            omega_r: scenario.omega_r,
            a: scenario.design.rss_amplitude(),
            h_condition: he.max() / he.min(),
            h_norm: linalg::spectral_norm(scenario.map.h_star()),
            h_inv_norm: linalg::spectral_norm(&scenario.map.h_star_inverse()?),
        })
    }
}

/// Initial magnitudes the envelopes decay from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeInit {
    pub theta: f64,
    pub y: f64,
    pub ghat: f64,
    pub gamma: f64,
}

/// Constants multiplying the residual terms `a + 1/ω`, `a² + 1/ω²`, `1/ω`
/// and `1/ω`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ResidualConstants {
    pub theta: f64,
    pub y: f64,
    pub ghat: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub theta: f64,
    pub y: f64,
    pub ghat: f64,
    pub gamma: f64,
}

fn residual_scales(p: &EnvelopeParams) -> Envelope {
    let inv = 1.0 / p.omega;
    Envelope {
        theta: p.a + inv,
        y: p.a * p.a + inv * inv,
        ghat: inv,
        gamma: inv,
    }
}

fn decaying_terms(p: &EnvelopeParams, init: &EnvelopeInit, t: f64) -> Envelope {
    let rate = p.rate();
    let half = (-0.5 * rate * t).exp();
    let kp = p.p1_condition();
    Envelope {
        theta: kp.sqrt() * half * init.theta,
        y: 2.0 * p.h_condition * kp * (-rate * t).exp() * init.y,
        ghat: kp.sqrt() * p.h_norm * p.h_inv_norm * half * init.ghat,
        gamma: (-p.omega_r * t).exp() * init.gamma,
    }
}

/// Right-hand sides of the four stability inequalities at time `t`.
pub fn stability_envelopes(p: &EnvelopeParams, init: &EnvelopeInit, c: &ResidualConstants, t: f64) -> Envelope {
    let d = decaying_terms(p, init, t);
    let s = residual_scales(p);
    Envelope {
        theta: d.theta + c.theta * s.theta,
        y: d.y + c.y * s.y,
        ghat: d.ghat + c.ghat * s.ghat,
        gamma: d.gamma + c.gamma * s.gamma,
    }
}

/// Observed `‖θ − θ*‖`, `|y − Q*|`, `‖Ĝ‖`, `‖Γ − H*⁻¹‖` along a run.
pub fn observed_errors(scenario: &Scenario, traj: &Trajectory) -> Result<Vec<(f64, Envelope)>> {
    let n = scenario.dim();
    let theta_star = scenario.map.theta_star();
    let q_star = scenario.map.q_star();
    let hinv = scenario.map.h_star_inverse()?;
    Ok(traj
        .records
        .iter()
        .map(|r| {
            let gamma = if r.gamma.is_empty() {
                f64::NAN
            } else {
                linalg::spectral_norm(&(DMatrix::from_row_slice(n, n, &r.gamma) - &hinv))
            };
            let obs = Envelope {
                theta: vec_dist(&r.theta, theta_star.as_slice()),
                y: (r.y - q_star).abs(),
                ghat: r.ghat.iter().map(|g| g * g).sum::<f64>().sqrt(),
                gamma,
            };
            (r.t, obs)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFlags {
    pub theta: bool,
    pub y: bool,
    pub ghat: bool,
    pub gamma: bool,
}

impl EnvelopeFlags {
    pub fn all(&self) -> bool {
        self.theta && self.y && self.ghat && self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub params: EnvelopeParams,
    pub init: EnvelopeInit,
    pub constants: ResidualConstants,
    pub passed: EnvelopeFlags,
    /// Largest `observed/envelope` ratio per quantity.
    pub worst_ratio: Envelope,
}

/// Fraction of the run, counted from the end, that calibrates the residual
/// constants.
pub const CALIBRATION_TAIL: f64 = 0.2;

/// Calibrates each residual constant on the final fifth of the run, then
/// checks that the envelopes dominate every sample.
pub fn check_envelopes(scenario: &Scenario, traj: &Trajectory) -> Result<EnvelopeCheck> {
    if !scenario.scheme().is_newton() {
        return Err(Error::invalid("scheme", "stability envelopes are defined for Newton schemes"));
    }
    let certs = newton_certificates(scenario)?;
    let params = EnvelopeParams::from_scenario(scenario, &certs.p1)?;
    let obs = observed_errors(scenario, traj)?;
    let (t_last, first) = match (obs.last(), obs.first()) {
        (Some(l), Some(f)) => (l.0, f.1),
        _ => return Err(Error::Empty("trajectory")),
    };
    let init = EnvelopeInit {
        theta: first.theta,
        y: first.y,
        ghat: first.ghat,
        gamma: first.gamma,
    };
    let scales = residual_scales(&params);
    let t_cal = (1.0 - CALIBRATION_TAIL) * t_last;
    let mut c = ResidualConstants::default();
    for (t, o) in obs.iter().filter(|(t, _)| *t >= t_cal) {
        let d = decaying_terms(&params, &init, *t);
        c.theta = c.theta.max((o.theta - d.theta) / scales.theta);
        c.y = c.y.max((o.y - d.y) / scales.y);
        c.ghat = c.ghat.max((o.ghat - d.ghat) / scales.ghat);
        c.gamma = c.gamma.max((o.gamma - d.gamma) / scales.gamma);
    }
    let ratio = |o: f64, e: f64| if e > 0.0 { o / e } else if o > 0.0 { f64::INFINITY } else { 0.0 };
    let mut worst = Envelope {
        theta: 0.0,
        y: 0.0,
        ghat: 0.0,
        gamma: 0.0,
    };
    for (t, o) in &obs {
        let e = stability_envelopes(&params, &init, &c, *t);
        worst.theta = worst.theta.max(ratio(o.theta, e.theta));
        worst.y = worst.y.max(ratio(o.y, e.y));
        worst.ghat = worst.ghat.max(ratio(o.ghat, e.ghat));
        worst.gamma = worst.gamma.max(ratio(o.gamma, e.gamma));
    }
    let ok = |r: f64| r <= 1.0 + 1e-12;
    Ok(EnvelopeCheck {
        params,
        init,
        constants: c,
        passed: EnvelopeFlags {
            theta: ok(worst.theta),
            y: ok(worst.y),
            ghat: ok(worst.ghat),
            gamma: ok(worst.gamma),
        },
        worst_ratio: worst,
    })
}

/// `V_av = θ̃ᵀP₁θ̃`.
pub fn lyapunov_value(p: &DMatrix<f64>, theta_tilde: &DVector<f64>) -> f64 {
    theta_tilde.dot(&(p * theta_tilde))
}
