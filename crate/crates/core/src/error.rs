use thiserror::Error;

/// Errors raised by the estimation, sampling and backtest engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MppError {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is indefinite: eigenvalue {min_eigenvalue:e} below tolerance (largest {max_eigenvalue:e})")]
    IndefiniteMatrix {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("invalid degrees of freedom: {0}")]
    InvalidDf(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid selector: {0}")]
    InvalidSelector(String),

    #[error("current wealth is zero")]
    ZeroWealth,

    #[error("invalid portfolio context: {0}")]
    InvalidContext(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("too few samples: need at least {required}, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("credible level must lie strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("at {date}: {source}")]
    AtPeriod {
        date: String,
        #[source]
        source: Box<MppError>,
    },
}

impl MppError {
    /// Innermost error, skipping any period context wrappers.
    pub fn root(&self) -> &MppError {
        match self {
            MppError::AtPeriod { source, .. } => source.root(),
            other => other,
        }
    }

    /// Stable short name of the error kind, used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            MppError::NotSpd(_) => "NotSpd",
            MppError::IndefiniteMatrix { .. } => "IndefiniteMatrix",
            MppError::InvalidDf(_) => "InvalidDf",
            MppError::DegenerateSample(_) => "DegenerateSample",
            MppError::InsufficientSample(_) => "InsufficientSample",
            MppError::InsufficientData(_) => "InsufficientData",
            MppError::InvalidSelector(_) => "InvalidSelector",
            MppError::ZeroWealth => "ZeroWealth",
            MppError::InvalidContext(_) => "InvalidContext",
            MppError::InvalidPrior(_) => "InvalidPrior",
            MppError::DimensionMismatch { .. } => "DimensionMismatch",
            MppError::TooFewSamples { .. } => "TooFewSamples",
            MppError::DegenerateVariance(_) => "DegenerateVariance",
            MppError::InvalidLevel(_) => "InvalidLevel",
            MppError::InvalidInput(_) => "InvalidInput",
            MppError::AtPeriod { .. } => unreachable!("root() strips period context"),
        }
    }

    pub(crate) fn at(self, date: impl Into<String>) -> MppError {
        MppError::AtPeriod {
            date: date.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, MppError>;
