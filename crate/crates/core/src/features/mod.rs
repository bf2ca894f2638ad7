//! Feature schema and instance encoding.

mod encode;
mod schema;

use std::sync::Arc;

pub use encode::{encode_row, field_embed_numeric, Batch, Column, Encoder, Instance, ItemSources};
pub use schema::{
    bin_numeric, build_schema, DenseVariant, FeatureSchema, FeatureSetting, FieldKind, FieldSource, FieldSpec,
    ModalSpec, NumericBinSpec, NumericMode, SchemaContext, SchemaOptions, DEFAULT_NUMERIC_BINS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("setting needs metadata field group {0:?}, which the metadata does not provide")]
    MissingField(String),
    #[error("non-finite numeric value")]
    NonFiniteValue,
    #[error("item {0:?} has no audio embedding")]
    MissingModality(String),
    #[error("invalid bin spec: {0}")]
    InvalidBinSpec(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Encoded payload of one field for one instance.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue {
    Index(u32),
    /// Sorted, de-duplicated indices of a multi-valued field.
    Bag(Vec<u32>),
    Dense(Arc<[f64]>),
    /// Raw numeric value for the field-embedding path.
    Scalar(f64),
}
