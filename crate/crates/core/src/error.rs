use thiserror::Error;

/// Errors produced by fitting, detection and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("lag order {order} too large for segment of length {len} (need len >= order + 2)")]
    OrderTooLarge { order: usize, len: usize },

    #[error("degenerate series: lag-0 autocovariance is {gamma0}")]
    DegenerateSeries { gamma0: f64 },

    #[error("Levinson-Durbin recursion hit reflection coefficient {kappa} at order {order}")]
    SingularSystem { order: usize, kappa: f64 },

    #[error("AR polynomial vanishes at lambda = {lambda}")]
    SpectralPole { lambda: f64 },

    #[error("residual range starting at {start} needs {order} lags of history")]
    InsufficientHistory { start: usize, order: usize },

    #[error("segment [{start}, {end}) is degenerate (constant values)")]
    DegenerateSegment { start: usize, end: usize },

    #[error("series of length {len} is shorter than 2 * min_segment = {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pre- and post-change AR coefficients coincide; jump size is zero")]
    NoJump,

    #[error("invalid limiting-process parameters: {0}")]
    InvalidParams(String),

    #[error("quantile table lacks probability {prob}")]
    TableIncomplete { prob: f64 },

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

impl Error {
    /// True for failures caused by the data being statistically degenerate
    /// rather than malformed input or configuration.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::NoJump
                | Error::DegenerateSeries { .. }
                | Error::DegenerateSegment { .. }
                | Error::SingularSystem { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
