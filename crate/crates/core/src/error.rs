use std::path::PathBuf;

use crate::kg::{EntityId, RelationId, Triple};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("entity {0:?} has no embedding")]
    MissingEntity(EntityId),

    #[error("relation {0:?} has no embedding")]
    MissingRelation(RelationId),

    #[error("parameter block shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("no corrupted triple found for {triple:?} after {attempts} attempts")]
    SamplerExhausted { triple: Triple, attempts: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("evaluation set is empty")]
    EmptyEvaluationSet,

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("unknown counter phase `{0}`")]
    UnknownPhase(String),

    #[error("dictionary mismatch: {0}")]
    Dictionary(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed store file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
