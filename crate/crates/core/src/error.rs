use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{0}")]
    IoBare(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown POS tag '{tag}'")]
    UnknownPos { line: usize, tag: String },

    #[error("line {line}: unknown chunk label '{label}'")]
    UnknownChunk { line: usize, label: String },

    #[error("line {line}: chunk label {label} at token {position} does not continue a {kind} chunk")]
    InvalidBio {
        line: usize,
        position: usize,
        label: String,
        kind: String,
    },

    #[error("line {line}: caption has no tokens")]
    EmptyTokens { line: usize },

    #[error("line {line}: duplicate caption key ({image_id}, {sentence_id})")]
    DuplicateCaption {
        line: usize,
        image_id: String,
        sentence_id: String,
    },

    #[error("lexicon entry '{0}' maps to itself")]
    LexiconSelfMap(String),

    #[error("lexicon cycle: {}", .0.join(" -> "))]
    LexiconCycle(Vec<String>),

    #[error("line {line}: lexicon entry '{key}' already maps to '{existing}'")]
    LexiconConflict {
        line: usize,
        key: String,
        existing: String,
    },

    #[error("lexicon entry '{key}' -> '{value}': hypernym has more words than its key")]
    LexiconLengthening { key: String, value: String },

    #[error("feature dimension mismatch for '{image_id}': expected {expected}, found {found}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite feature value for '{0}'")]
    NonFiniteFeature(String),

    #[error("duplicate feature record for '{0}'")]
    DuplicateFeature(String),

    #[error("unknown image '{0}'")]
    UnknownImage(String),

    #[error("image '{image}' is not among the images of node {node}")]
    ImageNotInNode { image: String, node: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("cycle detected among derivations")]
    Cycle,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("checksum mismatch: header says {expected}, payload hashes to {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("image '{0}' has a zero-norm feature vector")]
    ZeroNorm(String),

    #[error("invalid neighbour count k={k} for {n} images")]
    InvalidK { k: usize, n: usize },

    #[error("empty expression")]
    EmptyExpression,

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// True for failures of the numerical pipeline rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
