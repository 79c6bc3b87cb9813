use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive integration ran out of subdivisions. Carries the best value reached.
    #[error("quadrature did not converge: value {value:e}, error estimate {err_est:e}")]
    NonConvergence { value: f64, err_est: f64 },

    /// The alternating inter-zero series failed to settle (non-monotone integrand?).
    #[error("series acceleration stagnated after {terms} terms (best estimate {value:e})")]
    Stagnation { value: f64, terms: usize },

    #[error("accuracy not reached: {0}")]
    AccuracyNotReached(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Solution left [0, 1] by more than the numerical slack.
    #[error("range violation at t = {t}: u = {value:e} at x = {x}")]
    Range { t: f64, x: f64, value: f64 },

    #[error("edge guard violated at t = {t}: max |u| near boundary = {edge_max:e}")]
    EdgeGuard { t: f64, edge_max: f64 },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
}

impl Error {
    /// Whether the failure came out of a numerical integration routine.
    pub fn is_quadrature(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Stagnation { .. } | Error::AccuracyNotReached(_)
        )
    }
}
