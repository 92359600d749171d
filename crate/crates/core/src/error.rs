//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by training, scoring, selection, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("need at least two classes, got {got}")]
    TooFewClasses { got: usize },

    #[error("class {label} has {got} samples, need at least {needed}")]
    ClassTooSmall {
        label: String,
        got: usize,
        needed: usize,
    },

    #[error("feature {index} has zero within-class variance; drop or jitter constant features")]
    ConstantFeature { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "empirical correlation matrix is singular (no shrinkage and fewer residual degrees of \
         freedom than features)"
    )]
    SingularCorrelation,

    #[error("feature count {got} exceeds the dense-path limit of {max}")]
    FeatureLimit { max: usize, got: usize },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
