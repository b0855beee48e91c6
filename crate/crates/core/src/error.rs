use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HippoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A linear solve hit a zero pivot. `index` names the offending row when known.
    #[error("singular solve at row {index}")]
    Singular { index: usize },

    #[error("singular solve in dense system")]
    SingularDense,

    #[error("timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTimestamps { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<HippoError>,
    },
}

impl HippoError {
    pub(crate) fn at_step(self, index: usize) -> Self {
        match self {
            e @ HippoError::Step { .. } => e,
            e => HippoError::Step {
                index,
                source: Box::new(e),
            },
        }
    }

    /// Strips any `Step` wrapper.
    pub fn root(&self) -> &HippoError {
        match self {
            HippoError::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, HippoError>;
