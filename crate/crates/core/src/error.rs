use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid tensor archive: {0}")]
    Archive(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{name}` has unsupported dtype {dtype}")]
    UnsupportedDtype { name: String, dtype: String },

    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("token sequence is empty")]
    EmptySequence,

    #[error("sequence of {len} tokens exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("token id {0} is out of range")]
    TokenOutOfRange(u32),

    #[error("hook out of bounds: {0}")]
    HookOutOfBounds(String),

    #[error("logits contain non-finite values")]
    NonFiniteLogits,

    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid choice letter `{0}`")]
    InvalidLetter(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("trace was captured at level {found:?}, but {needed:?} is required")]
    CaptureInsufficient {
        needed: crate::model::CaptureLevel,
        found: crate::model::CaptureLevel,
    },

    #[error("sample list is empty")]
    EmptySamples,

    #[error("sample `{0}` has gold letter A; bias analysis needs gold != A")]
    GoldIsAnchor(String),

    #[error("anchor and target token are both {0}; the edit would cancel itself")]
    SelfCancellingEdit(u32),

    #[error("no loci supplied for the edit plan")]
    NoLoci,

    #[error("letter positions not found in tokenized prompt: {0}")]
    LetterPositions(String),

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("no usable records in {0}")]
    NoUsableRecords(String),

    #[error("word list is empty")]
    EmptyWordList,

    #[error("exemplar pool has {found} usable entries, need {needed}")]
    InsufficientExemplars { needed: usize, found: usize },

    #[error("toy spec invalid: {0}")]
    ToySpec(String),

    #[error("schema version {found} is not supported (expected {expected}); regenerate the run with this tool version")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
