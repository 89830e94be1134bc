//! Error type shared by every module.

use thiserror::Error;

/// Failures raised by construction, verification and configuration code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degree {degree} exceeds ambient dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },
    #[error("metric is not symmetric positive definite: {0}")]
    InvalidMetric(String),
    #[error("fields live on different charts")]
    ChartMismatch,
    #[error("field support reaches the boundary margin of a box chart")]
    BoundarySupport,
    #[error("representatives do not span: {0}")]
    SpanningHypothesis(String),
    #[error("epsilon too large: {0}")]
    EpsilonTooLarge(String),
    #[error("period of the form over the submanifold is not positive: {0}")]
    NonPositivePeriod(f64),
    #[error("form is not exact on the tube: period {0:e}")]
    ClassObstruction(f64),
    #[error("prescribed factor is not positive; shrink epsilon (min {0:e})")]
    ShrinkEpsilon(f64),
    #[error("comass of the glued form vanishes near the submanifold")]
    ComassVanishes,
    #[error("tubes overlap: {0}")]
    TubeOverlap(String),
    #[error("integration step too large: energy drift {0:e}")]
    StepTooLarge(f64),
    #[error("invalid submanifold: {0}")]
    InvalidSubmanifold(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("expression error: {0}")]
    Expr(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("field file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
