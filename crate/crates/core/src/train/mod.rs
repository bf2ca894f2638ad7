//! Adam, mini-batching, early stopping and pairwise sampling.

mod adam;
mod ctr;
mod recall;
mod report;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use ctr::{evaluate_auc, predict_pairs, train_ctr};
pub use recall::{recall_at_k, train_recall, user_histories, NegativeSampler, RecallEval};
pub use report::{EarlyStopper, EpochRecord, StopDecision, TrainReport};

use crate::metrics::MetricError;
use crate::models::ModelError;

/// Rows per gradient shard; fixed so results do not depend on thread count.
pub const GRAD_SHARD: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite gradient at epoch {epoch}, step {step}")]
    NonFiniteGradient { epoch: usize, step: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("training split has no usable examples")]
    EmptyTrain,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("gradient shapes do not match parameters")]
    ShapeMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub l2: f64,
    pub negatives_per_positive: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 2048,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            l2: 1e-6,
            negatives_per_positive: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad("patience must be in 1..=max_epochs");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be finite and >= 0");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be >= 1");
        }
        Ok(())
    }
}
