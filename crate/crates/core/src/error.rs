use thiserror::Error;

/// Errors raised by field evaluation, integration and the residual checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-positive factor {value} at {point:?}")]
    NonPositiveFactor { value: f64, point: Vec<f64> },

    #[error("non-positive density {value} at {point:?}")]
    NonPositiveDensity { value: f64, point: Vec<f64> },

    #[error("metric lost positive definiteness at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("metric is not symmetric at {point:?} (entry ({row}, {col}))")]
    NotSymmetric {
        point: Vec<f64>,
        row: usize,
        col: usize,
    },

    #[error("non-finite {context} at {point:?}")]
    NonFinite {
        context: &'static str,
        point: Vec<f64>,
    },

    #[error("point {point:?} is outside the field's domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("step budget of {max_steps} exhausted at parameter {param}")]
    StepLimit { max_steps: usize, param: f64 },

    #[error("step size underflow at parameter {param}")]
    StepUnderflow { param: f64 },

    #[error("adaptive quadrature failed to converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("trajectory truncated at parameter {param}")]
    Truncated { param: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("degenerate sampling: {0}")]
    DegenerateSampling(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rescaling factor is not single-valued along a closed orbit (log mismatch {mismatch:e} after one revolution)")]
    NonSingleValued { mismatch: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_finite(values: &[f64], context: &'static str, point: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context,
            point: point.to_vec(),
        })
    }
}
