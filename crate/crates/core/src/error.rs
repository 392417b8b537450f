use thiserror::Error;

/// Which part of an update produced a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Inner step `k` of the fast trajectory.
    FastTrajectory(usize),
    SlowCorrection,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::FastTrajectory(k) => write!(f, "fast trajectory inner step k={k}"),
            Stage::SlowCorrection => write!(f, "slow correction"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfpoError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient at {stage} (coordinate {coordinate})")]
    NonFiniteGradient { stage: Stage, coordinate: usize },

    #[error("non-finite parameters after {stage} (coordinate {coordinate})")]
    NonFiniteParameters { stage: Stage, coordinate: usize },
}

pub type Result<T, E = SfpoError> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> SfpoError {
    SfpoError::Config(msg.into())
}
