//! The static quadratic map used as ground truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A static map from parameter vector to scalar measurement.
pub trait StaticMap {
    fn dim(&self) -> usize;
    fn evaluate(&self, theta: &DVector<f64>) -> f64;
}

/// `y = Q* + ½(θ−θ*)ᵀH*(θ−θ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    q_star: f64,
    h_star: DMatrix<f64>,
    theta_star: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremumKind {
    pub kind: Extremum,
    /// 0 for a minimum, 1 for a maximum, so that `(−1)^op·H* > 0`.
    pub op: u8,
}

impl ExtremumKind {
    pub fn sign(&self) -> f64 {
        if self.op == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl QuadraticMap {
    pub fn new(q_star: f64, h_star: DMatrix<f64>, theta_star: DVector<f64>) -> Result<Self> {
        let n = theta_star.len();
        if n == 0 {
            return Err(Error::Empty("thetastar"));
        }
        if h_star.nrows() != n || h_star.ncols() != n {
            return Err(Error::Dimension {
                what: "Hstar",
                expected: n,
                got: if h_star.nrows() != n { h_star.nrows() } else { h_star.ncols() },
            });
        }
        if !q_star.is_finite() || h_star.iter().chain(theta_star.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("map", "all parameters must be finite"));
        }
        if !linalg::is_symmetric(&h_star, 1e-12) {
            return Err(Error::invalid("Hstar", "must be symmetric to 1e-12"));
        }
        Ok(Self {
            q_star,
            h_star,
            theta_star,
        })
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    pub fn h_star(&self) -> &DMatrix<f64> {
        &self.h_star
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn try_evaluate(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.evaluate(theta))
    }

    /// `H*(θ−θ*)`.
    pub fn true_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        Ok(&self.h_star * (theta - &self.theta_star))
    }

    /// Minimum iff `H* > 0`; errors when `H*` is indefinite or singular.
    pub fn extremum_kind(&self) -> Result<ExtremumKind> {
        let eig = linalg::symmetric_eigen(&self.h_star)?;
        if eig.min() > 0.0 {
            Ok(ExtremumKind {
                kind: Extremum::Minimum,
                op: 0,
            })
        } else if eig.max() < 0.0 {
            Ok(ExtremumKind {
                kind: Extremum::Maximum,
                op: 1,
            })
        } else {
            Err(Error::Indefinite {
                eigenvalues: eig.values.iter().cloned().collect(),
            })
        }
    }

    /// `H*⁻¹`, defined for every sign-definite map.
    pub fn h_star_inverse(&self) -> Result<DMatrix<f64>> {
        self.h_star
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("Hstar inverse"))
    }

    fn check_dim(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                what: "theta",
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

impl StaticMap for QuadraticMap {
    fn dim(&self) -> usize {
        self.theta_star.len()
    }

    /// Panics on a dimension mismatch; see [`QuadraticMap::try_evaluate`].
    fn evaluate(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.theta_star;
        self.q_star + 0.5 * d.dot(&(&self.h_star * &d))
    }
}
