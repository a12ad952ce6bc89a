use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input cloud")]
    EmptyCloud,

    #[error("too small for ground estimation: {0} points, need at least 4")]
    TooSmallForGround(usize),

    #[error("insufficient points for SOR: {points} points with k = {k}")]
    InsufficientForSor { points: usize, k: usize },

    #[error("insufficient points for normal estimation: {points} points with k = {k}")]
    InsufficientForNormals { points: usize, k: usize },

    #[error("registration degenerate: only {0} usable correspondences")]
    RegistrationDegenerate(usize),

    #[error("degenerate correspondence set")]
    DegenerateCorrespondence,

    #[error("need at least two observations")]
    NeedTwoObservations,

    #[error("invalid distance {0}")]
    InvalidDistance(f64),

    #[error("unbounded distance for label {0}")]
    UnboundedDistance(f64),

    #[error("degenerate ROC: truth contains a single class")]
    DegenerateRoc,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("label {0} outside [0, 1]")]
    LabelOutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("impossible placement: {0}")]
    Placement(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed for session {session}: {source}")]
    Stage {
        stage: &'static str,
        session: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps the error with the pipeline stage and session that produced it.
    pub fn in_stage(self, stage: &'static str, session: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            session: session.into(),
            source: Box::new(self),
        }
    }
}
