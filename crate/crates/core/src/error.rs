use thiserror::Error;

use crate::store::VersionId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("word not in vocabulary: {0}")]
    OutOfVocabulary(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate word {word:?} on line {line}")]
    DuplicateWord { word: String, line: usize },

    #[error("empty embedding input")]
    EmptyInput,

    #[error("invalid word token {0:?}")]
    InvalidToken(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite vector component for {0:?}")]
    NonFinite(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("version mismatch: expected base {expected}, current is {current}")]
    VersionMismatch { expected: VersionId, current: VersionId },

    #[error("unknown version {0}")]
    UnknownVersion(VersionId),

    #[error("invalid refit specification: {0}")]
    InvalidSpec(String),

    #[error("invalid refit parameters: {0}")]
    InvalidParams(String),

    #[error("zero denominator updating {0:?}")]
    ZeroDenominator(String),

    #[error("singular system: a connected component has no anchored word")]
    SingularSystem,

    #[error("exact solve limited to {limit} movable words, got {got}")]
    TooManyMembers { limit: usize, got: usize },

    #[error("invalid projection input: {0}")]
    Projection(String),

    #[error("nothing to undo")]
    NothingToUndo,

    #[error("journal chain mismatch: {0}")]
    ChainMismatch(String),

    #[error("journal line {line}: {source}")]
    JournalFormat {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
