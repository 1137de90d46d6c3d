use thiserror::Error;

use crate::document::DocKind;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    // --- documents ---
    #[error("document {0:?} has no utterances after segmentation")]
    EmptyDocument(String),
    #[error("unknown section type {name:?} for document kind {kind:?}")]
    UnknownSectionType { kind: DocKind, name: String },

    // --- encoding ---
    #[error("utterance has no tokens")]
    EmptyUtterance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no categorical encoding row for section id {0}")]
    MissingCategoricalRow(u16),

    // --- embedding cache ---
    #[error("bad magic bytes in cache file")]
    BadMagic,
    #[error("cache dimension mismatch: file has {file}, expected {expected}")]
    DimMismatch { file: u32, expected: u32 },
    #[error("truncated cache file")]
    TruncatedFile,
    #[error("cache has no entry for document {0:?}")]
    CacheMiss(String),

    // --- interaction ---
    #[error("empty embedding sequence")]
    EmptySequence,
    #[error("non-finite attention logit")]
    NonFiniteLogit,
    #[error("sequence/context length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty similarity distribution")]
    EmptyDistribution,

    // --- training ---
    #[error("empty batch")]
    EmptyBatch,
    #[error("no valid pairs for margin loss")]
    NoValidPairs,
    #[error("project {0:?} has all-zero teacher scores")]
    DegenerateProject(String),
    #[error("dataset has {have} projects, batch needs {needed}")]
    InsufficientProjects { needed: usize, have: usize },
    #[error("non-finite loss at step {step} ({detail})")]
    NonFiniteLoss { step: u64, detail: String },

    // --- evaluation ---
    #[error("empty dataset")]
    EmptyDataset,
    #[error("slice key {0:?} present on no record")]
    UnknownSliceKey(String),

    // --- synthetic world ---
    #[error("skill {0:?} does not exist in the world")]
    ForeignSkill(String),
    #[error("could not generate a level-{level:.1} candidate in {tries} tries")]
    ExhaustedSampler { level: f64, tries: usize },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    // --- checkpoints ---
    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code class: 2 for data problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLogit | Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}
