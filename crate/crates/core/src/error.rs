use std::io;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("statement at line {line} has no liked courses")]
    EmptyLikedList { line: usize },

    #[error("malformed lexicon entry at line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },

    #[error("input is empty")]
    EmptyInput,

    #[error("text is empty after tokenization")]
    EmptyText,

    #[error("query is empty after cleaning")]
    EmptyQuery,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("attention mask of `{0}` has no valid tokens")]
    AllMasked(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file is truncated")]
    TruncatedFile,

    #[error("invalid file contents: {0}")]
    InvalidData(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("no embedding available for `{0}`")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("projection output has (near) zero norm")]
    DegenerateNorm,

    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,

    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),

    #[error("no anchor in the batch has a positive")]
    NoValidAnchors,

    #[error("query set is empty")]
    EmptyQuerySet,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("covariance is degenerate (all points identical)")]
    DegenerateCovariance,
}

pub type Result<T> = std::result::Result<T, Error>;

/// Maps an unexpected EOF onto [`Error::TruncatedFile`].
pub(crate) fn eof_as_truncated(err: io::Error) -> Error {
    if err.kind() == io::ErrorKind::UnexpectedEof {
        Error::TruncatedFile
    } else {
        Error::Io(err)
    }
}
