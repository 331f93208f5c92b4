use thiserror::Error;

pub type Result<T, E = SmcError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    /// Total weight collapse: every potential value of one marginal is zero.
    #[error("all particle weights are zero at time {time}")]
    AllZeroWeights { time: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("model has no pointwise density view (required by {0})")]
    MissingDensity(&'static str),

    #[error("rejection sampler exceeded {cap} iterations for pair {pair} at time {time}")]
    RejectionBudgetExceeded { time: usize, pair: usize, cap: u64 },

    #[error("state dimension {dim} is unsupported, {required} required")]
    DimensionUnsupported { dim: usize, required: usize },

    #[error("non-finite state produced by the Euler recursion")]
    NonFiniteState,

    #[error("exact recursion has zero mass at time {time}")]
    ZeroMass { time: usize },

    #[error("accuracy {0} must lie in (0, 1)")]
    InvalidAccuracy(f64),

    #[error("cloud is at time {found}, step expected time {expected}")]
    TimeMismatch { expected: usize, found: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<SmcError>,
    },
}

impl SmcError {
    pub fn at_level(self, level: usize) -> Self {
        SmcError::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
