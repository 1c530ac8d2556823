use thiserror::Error;

/// Errors raised by the filtering library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("particle {index} at {position:?} lies outside the grid halo")]
    OutsideGrid { index: usize, position: Vec<f64> },

    #[error("point {0:?} lies outside the grid")]
    PointOutsideGrid(Vec<f64>),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular ridge normal matrix; use a penalty lambda > 0")]
    SingularRidge,

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("assimilation step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_member(self, member: usize) -> Error {
        Error::Member {
            member,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
