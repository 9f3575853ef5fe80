use thiserror::Error;

/// Errors raised by model construction, validation and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("Hessian is indefinite (eigenvalues {eigenvalues:?})")]
    Indefinite { eigenvalues: Vec<f64> },

    #[error("{what} is not Hurwitz (max real eigenvalue part {max_real})")]
    NotHurwitz { what: String, max_real: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("event at t={t} does not follow the previous event at t={last}")]
    NonMonotoneEvent { t: f64, last: f64 },

    #[error("hold queried at t={t} before the sample was computed at t={computed_at}")]
    HoldBeforeSample { t: f64, computed_at: f64 },

    #[error("simulation diverged at t={t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
