use thiserror::Error;

/// Errors raised anywhere in the calibration pipeline.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("matrix is numerically singular (smallest singular value {0:e})")]
    SingularInput(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: invalid rotation ({reason})")]
    InvalidRotation { line: usize, reason: String },

    #[error("input contains no measurements")]
    EmptyInput,

    #[error("trajectory lengths differ ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },

    #[error("need at least {needed} poses, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("need at least 2 relative motions, got {0}")]
    TooFewMeasurements(usize),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("translation block is singular (condition number {0:e}); rotations do not span two axes")]
    SingularQtt(f64),

    #[error("measurements are not observable: {0}")]
    NotObservable(String),

    #[error("SDP solve failed: {0}")]
    SdpFailure(String),

    #[error("primal solution is not rank one (eigenvalue ratio {0:e})")]
    RankDeficiencyAmbiguous(f64),

    #[error("local solver hit the iteration limit after {iterations} iterations")]
    MaxIter {
        iterations: usize,
        best: Box<crate::solver::CalibrationResult>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;
