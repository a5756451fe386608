use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),
    #[error("ego is not on any lane")]
    OffMap,
    #[error("smoothing factor {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("missing front camera")]
    MissingFrontCamera,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out-of-vocabulary word `{0}`")]
    OutOfVocab(String),
    #[error("trajectory parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("trajectory has {found} points, expected {expected}")]
    Arity { expected: usize, found: usize },
    #[error("missing embedding override at position {0}")]
    MissingOverride(usize),
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("non-finite {term} loss")]
    Numeric { term: &'static str },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training refused: {0}")]
    Refused(String),
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
