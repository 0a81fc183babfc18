use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coordinate out of bounds: {0}")]
    OutOfBounds(String),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("mask is empty")]
    EmptyMask,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tape was not produced by this sampler")]
    ForeignTape,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("missing template slot `{0}`")]
    MissingSlot(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("vocabulary has no class absent from image {0}")]
    ExhaustedVocabulary(String),
    #[error("missing caption alignments for image {0}")]
    MissingAlignments(String),
    #[error("overlapping ranges: {0:?} and {1:?}")]
    OverlappingRanges(std::ops::Range<usize>, std::ops::Range<usize>),
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("llm client: {0}")]
    Llm(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
