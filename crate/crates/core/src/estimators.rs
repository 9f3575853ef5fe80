//! Demodulated gradient and Hessian estimates and the Riccati filter that
//! tracks the inverse Hessian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `Ĝ = M(t)·y`.
pub fn gradient_estimate(demod: &DVector<f64>, y: f64) -> DVector<f64> {
    demod * y
}

/// `Ĥ = N(t)·y`.
pub fn hessian_estimate(probe: &DMatrix<f64>, y: f64) -> DMatrix<f64> {
    probe * y
}

/// `dΓ/dt = ω_r Γ − ω_r Γ Ĥ Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiFilter {
    omega_r: f64,
}

impl RiccatiFilter {
    pub fn new(omega_r: f64) -> Result<Self> {
        if !(omega_r.is_finite() && omega_r > 0.0) {
            return Err(Error::invalid("omega_r", format!("must be positive, got {omega_r}")));
        }
        Ok(Self { omega_r })
    }

    pub fn omega_r(&self) -> f64 {
        self.omega_r
    }

    pub fn rhs(&self, gamma: &DMatrix<f64>, hhat: &DMatrix<f64>) -> DMatrix<f64> {
        (gamma - gamma * hhat * gamma) * self.omega_r
    }
}
