use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("action index {index} out of range 1..={count}")]
    ActionOutOfRange { index: usize, count: usize },

    #[error("state ({x}, {y}) is {region} and has no outgoing transition")]
    NonTransientState {
        x: f64,
        y: f64,
        region: &'static str,
    },

    #[error("state ({x}, {y}) lies outside the workspace")]
    OutsideWorkspace { x: f64, y: f64 },

    #[error("supporting states {first} and {second} are closer than the minimum separation; (λI+K) would be singular")]
    NearDuplicateSupport { first: usize, second: usize },

    #[error("matrix not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular linear system (condition estimate {condition_estimate:.3e})")]
    SingularSystem { condition_estimate: f64 },

    #[error("moment computation failed at supporting state {index}: {source}")]
    AtSupportState {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("policy has no action for non-terminal supporting state {0}")]
    MissingAction(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_support(index: usize, source: Error) -> Self {
        Error::AtSupportState {
            index,
            source: Box::new(source),
        }
    }

    /// True for failures caused by a numerically singular or indefinite system.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NearDuplicateSupport { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::SingularSystem { .. } => true,
            Error::AtSupportState { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
