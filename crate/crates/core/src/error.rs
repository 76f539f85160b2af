use thiserror::Error;

use crate::models::ModelKind;

/// Errors raised by the modeling, calibration and statistics kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scenario is invalid: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("every store weight is zero for neighborhood {neighborhood}")]
    AllZeroWeights { neighborhood: String },

    #[error("no neighborhood has any observed visits")]
    NoObservations,

    #[error("model kind mismatch: {left:?} vs {right:?}")]
    KindMismatch { left: ModelKind, right: ModelKind },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("objective has zero variance for every initial particle; scenario cannot be calibrated")]
    NonCalibratable,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distribution has no positive mass")]
    EmptyDistribution,

    #[error("degenerate range: all values equal {0}")]
    DegenerateRange(f64),

    #[error("design matrix is rank deficient (column {column} is collinear)")]
    RankDeficient { column: String },

    #[error("insufficient data: {n_obs} observations for {n_params} parameters")]
    InsufficientData { n_obs: usize, n_params: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
