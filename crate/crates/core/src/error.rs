use thiserror::Error;

/// Errors raised by the simulation, theory and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate lattice: basis determinant {0:e}")]
    DegenerateLattice(f64),
    #[error("enumeration too large: {count} points exceed cap {cap}")]
    EnumerationTooLarge { count: u64, cap: u64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("window not contained in source window")]
    WindowNotContained,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("positive definiteness violated: {0}")]
    NotPositiveDefinite(String),
    #[error("covariance not embeddable at this size: {0}")]
    NotEmbeddable(String),
    #[error("perfectly correlated perturbations at squared lag {lag_sq_norm} (kappa = {kappa:e})")]
    PerfectlyCorrelated { lag_sq_norm: u64, kappa: f64 },
    #[error("r too large for window: r = {r}, limit = {limit}")]
    RadiusTooLarge { r: f64, limit: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn staged(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of a numerical method rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotEmbeddable(_)
            | Error::PerfectlyCorrelated { .. }
            | Error::NotPositiveDefinite(_)
            | Error::EnumerationTooLarge { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
