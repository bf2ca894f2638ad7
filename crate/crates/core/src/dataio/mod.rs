//! Interaction logs, metadata, embedding files, labelling and splits.

mod dataset;
mod embeddings;
mod events;
mod keymap;
mod labels;
mod metadata;
mod split;

use std::io;
use std::path::{Path, PathBuf};

pub use dataset::{compact, Dataset, DATASET_MAGIC};
pub use embeddings::{load_layered_embeddings, sidecar_path, LayeredEmbeddings, EMB_MAGIC, EMB_VERSION};
pub use events::{parse_interactions, parse_interactions_from, write_interactions, EventLog, InteractionEvent, EVENTS_HEADER};
pub use keymap::{DatasetKeys, ItemKeys, KeyMap};
pub use labels::{binarize, k_core_filter, LabeledPair, DEFAULT_CORE, DEFAULT_THRESHOLD};
pub use metadata::{parse_metadata, parse_metadata_from, write_metadata, EntityKind, MetaRecord, MetadataTable};
pub use split::{split_cold_start, split_random, ColdSplitSet, SplitRatios, SplitSet};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("input contains no records")]
    EmptyInput,
    #[error("malformed line {line}")]
    MalformedLine { line: usize },
    #[error("line {line}: timestamp {value:?} is not a non-negative integer")]
    BadTimestamp { line: usize, value: String },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("split ratios {0:?} must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("cold fraction {fraction} of {items} items selects no cold items")]
    DegenerateColdFraction { items: usize, fraction: f64 },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("non-finite embedding value for item {item:?}")]
    NonFiniteEmbedding { item: String },
    #[error("key map lists {actual} entries but the file holds {expected}")]
    KeyMapMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DataError {
    pub fn file(path: &Path, source: io::Error) -> Self {
        DataError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}
