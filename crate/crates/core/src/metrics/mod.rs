//! Classification, ranking and popularity metrics.

mod classification;
mod popularity;
mod ranking;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use classification::{auc, logloss, LOGLOSS_CLIP};
pub use popularity::{bin_index, item_popularity, popularity_histogram, quantile_edges, PopularityHistogram};
pub use ranking::{topk_metrics, user_topk, TopK};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("AUC is undefined without both positive and negative labels")]
    UndefinedAuc,
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
}

/// Evaluation summary for one model on one split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logloss: Option<f64>,
    /// Instances (CTR) or users (ranking) evaluated.
    pub count: usize,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub topk: BTreeMap<usize, TopK>,
}
