//! CTR and recall model families on top of the tensor engine.

mod checkpoint;
mod ctr;
mod layers;
mod recall;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_bytes, manifest_for, manifest_path, model_from_bytes, read_checkpoint, write_checkpoint, CheckpointManifest,
    ModelFamily, ParamShape, SavedModel, CHECKPOINT_MAGIC,
};
pub use ctr::{cross_layer, CtrKind, CtrModel, CtrNet};
pub use layers::Mlp;
pub use recall::{
    modal_features, rank_items, ItemScorer, RankedList, RecallBatch, RecallKind, RecallModel, RecallNet, VbprInput,
};

use crate::features::FeatureError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("schema mismatch: {0}")]
    SchemaError(String),
    #[error("item {0} has no modal feature vector")]
    MissingModality(u32),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Architecture hyperparameters shared by every model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    pub embed_dim: usize,
    pub mlp: Vec<usize>,
    pub cross_depth: usize,
    /// AFM attention width; `None` uses `embed_dim`.
    pub attention_dim: Option<usize>,
    pub adaptor_hidden: usize,
    pub init_std: f64,
    /// Weight of the squared norm of gathered embedding rows, per example.
    pub l2: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            mlp: vec![64, 32],
            cross_depth: 2,
            attention_dim: None,
            adaptor_hidden: 64,
            init_std: 0.05,
            l2: 1e-6,
        }
    }
}
