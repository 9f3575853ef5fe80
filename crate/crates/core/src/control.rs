//! Tuning laws and the zero-order hold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::plant::QuadraticMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    GradientContinuous,
    GradientEt,
    NewtonContinuous,
    NewtonEt,
}

impl Scheme {
    pub fn is_newton(self) -> bool {
        matches!(self, Scheme::NewtonContinuous | Scheme::NewtonEt)
    }

    pub fn is_event_triggered(self) -> bool {
        matches!(self, Scheme::GradientEt | Scheme::NewtonEt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::GradientContinuous => "gradient_continuous",
            Scheme::GradientEt => "gradient_et",
            Scheme::NewtonContinuous => "newton_continuous",
            Scheme::NewtonEt => "newton_et",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient_continuous" => Ok(Scheme::GradientContinuous),
            "gradient_et" => Ok(Scheme::GradientEt),
            "newton_continuous" => Ok(Scheme::NewtonContinuous),
            "newton_et" => Ok(Scheme::NewtonEt),
            other => Err(Error::invalid(
                "scheme",
                format!(
                    "unknown scheme `{other}` (expected gradient_continuous, gradient_et, newton_continuous or newton_et)"
                ),
            )),
        }
    }
}

/// Diagonal gain `K` and the scheme it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    k_diag: DVector<f64>,
    scheme: Scheme,
}

impl ControllerGains {
    pub fn new(k_diag: DVector<f64>, scheme: Scheme) -> Result<Self> {
        if k_diag.is_empty() {
            return Err(Error::Empty("K"));
        }
        if k_diag.iter().any(|k| !k.is_finite() || *k == 0.0) {
            return Err(Error::invalid("K", "diagonal entries must be finite and nonzero"));
        }
        if scheme.is_newton() && k_diag.iter().any(|k| *k <= 0.0) {
            return Err(Error::invalid("K", "Newton schemes need K positive definite"));
        }
        Ok(Self { k_diag, scheme })
    }

    pub fn k_diag(&self) -> &DVector<f64> {
        &self.k_diag
    }

    pub fn k_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.k_diag)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `‖K‖` (largest |K_ii| for a diagonal gain).
    pub fn norm(&self) -> f64 {
        self.k_diag.iter().fold(0.0, |acc, k| acc.max(k.abs()))
    }

    /// Simulation-side check that needs the true Hessian: `H*K` Hurwitz for
    /// gradient schemes, `−K` and `H*(−K)H*⁻¹` Hurwitz for Newton schemes.
    pub fn validate_against(&self, map: &QuadraticMap) -> Result<()> {
        if self.k_diag.len() != map.h_star().nrows() {
            return Err(Error::Dimension {
                what: "K",
                expected: map.h_star().nrows(),
                got: self.k_diag.len(),
            });
        }
        let k = self.k_matrix();
        if self.scheme.is_newton() {
            linalg::ensure_hurwitz(&(-&k), "-K")?;
            let hinv = map.h_star_inverse()?;
            linalg::ensure_hurwitz(&(map.h_star() * (-&k) * hinv), "H*(-K)H*^-1")
        } else {
            linalg::ensure_hurwitz(&(map.h_star() * &k), "H*K")
        }
    }

    /// The law for this scheme applied to the decision signal: `KĜ` for the
    /// gradient schemes, `−K(ΓĜ)` for the Newton schemes.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        if self.scheme.is_newton() {
            control_newton(&self.k_diag, z)
        } else {
            control_gradient_continuous(&self.k_diag, z)
        }
    }
}

/// `u = KĜ`.
pub fn control_gradient_continuous(k_diag: &DVector<f64>, ghat: &DVector<f64>) -> DVector<f64> {
    k_diag.component_mul(ghat)
}

/// `u = −K z` where `z` is `ΓĜ`, instantaneous or held.
pub fn control_newton(k_diag: &DVector<f64>, z_held: &DVector<f64>) -> DVector<f64> {
    -k_diag.component_mul(z_held)
}

/// A control value held from `computed_at` until the next update.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSample {
    pub u: DVector<f64>,
    pub computed_at: f64,
}

impl ControlSample {
    pub fn new(u: DVector<f64>, computed_at: f64) -> Self {
        Self { u, computed_at }
    }

    pub fn held_control(&self, t: f64) -> Result<&DVector<f64>> {
        if t < self.computed_at {
            return Err(Error::HoldBeforeSample {
                t,
                computed_at: self.computed_at,
            });
        }
        Ok(&self.u)
    }
}
