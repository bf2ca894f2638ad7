//! Layer-wise discretisation of pooled audio embeddings.
//!
//! Each layer's `(H)` vectors are clustered independently with k-means; an
//! item's token sequence is its nearest-centroid id in every layer.

mod ari;
mod kmeans;
mod pool;
mod tokens;

use std::io;
use std::path::PathBuf;

pub use ari::{adjusted_rand_index, ari_matrix, AriMatrix};
pub use kmeans::{assign_nearest, fit_kmeans, Codebook, KMeansFit, KMeansOptions, Points};
pub use pool::pool_temporal;
pub use tokens::{tokenize, tokenize_rows, TokenCodebooks, TokenTable, TOKEN_CSV_ID};

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("k-means needs at least k={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k must be >= 1")]
    ZeroClusters,
    #[error("temporal pooling over zero frames")]
    EmptySequence,
    #[error("need at least two labelled items, got {0}")]
    DegenerateInput(usize),
    #[error("labelings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("embeddings are empty")]
    EmptyEmbeddings,
    #[error("token table line {line}: {message}")]
    BadCsv { line: usize, message: String },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
