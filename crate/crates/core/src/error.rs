use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate turn id `{0}`")]
    DuplicateId(String),

    #[error("cannot order turn `{turn_id}`: {reason}")]
    Ordering { turn_id: String, reason: String },

    #[error("unmapped source label `{0}`")]
    UnmappedLabel(String),

    #[error("turn `{0}` has no dialogue act annotation")]
    NotAnnotated(String),

    #[error("malformed match for question `{0}`: no answer turn")]
    MalformedMatch(String),

    #[error("unknown turn id `{0}`")]
    UnknownTurn(String),

    #[error("instance {0} is unlabeled")]
    Unlabeled(String),

    #[error("training plan is empty")]
    EmptyPlan,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} gold labels vs {right} predictions")]
    Alignment { left: usize, right: usize },

    #[error("prediction {index} is for `{found}` but gold instance {index} is `{expected}`")]
    OriginMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("degenerate marginals: expected agreement is 1 but observed agreement is {0}")]
    DegenerateMarginals(f64),

    #[error("requested {requested} shots but only {available} examples are available")]
    InsufficientShots { requested: usize, available: usize },

    #[error("no recording for prompt digest {0}")]
    MissingRecording(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
