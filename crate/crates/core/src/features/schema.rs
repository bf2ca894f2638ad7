use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FeatureError;
use crate::dataio::{KeyMap, LabeledPair, LayeredEmbeddings, MetaRecord, MetadataTable};

pub const DEFAULT_NUMERIC_BINS: usize = 10;

/// Equal-width bins over `[x_min, x_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericBinSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub k: usize,
}

impl NumericBinSpec {
    pub fn new(x_min: f64, x_max: f64, k: usize) -> Result<Self, FeatureError> {
        let spec = Self { x_min, x_max, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.k == 0 {
            return Err(FeatureError::InvalidBinSpec("k must be >= 1".into()));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(FeatureError::InvalidBinSpec(format!(
                "need finite x_max > x_min, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min) / self.k as f64
    }
}

/// `clamp(⌊(x − x_min)/w⌋, 0, k − 1)`.
pub fn bin_numeric(x: f64, spec: &NumericBinSpec) -> Result<usize, FeatureError> {
    if !x.is_finite() {
        return Err(FeatureError::NonFiniteValue);
    }
    let b = ((x - spec.x_min) / spec.width()).floor();
    Ok(b.clamp(0.0, (spec.k - 1) as f64) as usize)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetting {
    #[default]
    IdOnly,
    IdCategories,
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseVariant {
    /// One dense field per layer, sharing one adaptor.
    AllLayers,
    /// A single field holding the layer mean.
    #[default]
    Mean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModalSpec {
    #[default]
    None,
    MuqDense {
        #[serde(default)]
        variant: DenseVariant,
    },
    MuqToken {
        k: usize,
    },
}

impl ModalSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ModalSpec::None => "none",
            ModalSpec::MuqDense { .. } => "muq_dense",
            ModalSpec::MuqToken { .. } => "muq_token",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMode {
    /// Hard equal-width discretisation.
    #[default]
    Bucket,
    /// `x · v` with a learnable `v`.
    FieldEmbedding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaOptions {
    pub setting: FeatureSetting,
    pub modal: ModalSpec,
    pub numeric_bins: usize,
    pub numeric_mode: NumericMode,
    /// Add the text vector as a dense field whenever a modal path is active.
    pub include_text: bool,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            setting: FeatureSetting::IdOnly,
            modal: ModalSpec::None,
            numeric_bins: DEFAULT_NUMERIC_BINS,
            numeric_mode: NumericMode::Bucket,
            include_text: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FieldSource {
    UserId,
    ItemId,
    UserMeta { key: String },
    ItemMeta { key: String },
    /// `layer: None` is the mean over layers.
    Audio { layer: Option<usize> },
    Text,
    Token { layer: usize },
}

impl FieldSource {
    pub fn is_user(&self) -> bool {
        matches!(self, FieldSource::UserId | FieldSource::UserMeta { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// Index 0 is reserved for unknown values.
    Categorical { cardinality: usize, vocab: Vec<String> },
    MultiCategorical { cardinality: usize, vocab: Vec<String> },
    /// Bucketed: index 0 = missing, buckets `1..=k`. Field-embedded: raw value.
    Numeric { bins: NumericBinSpec, mode: NumericMode },
    Dense { dim: usize },
    /// Cluster id plus one; 0 = missing.
    Token { cardinality: usize },
}

impl FieldKind {
    /// Rows of the field's embedding table, if it has one.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            FieldKind::Categorical { cardinality, .. }
            | FieldKind::MultiCategorical { cardinality, .. }
            | FieldKind::Token { cardinality } => Some(*cardinality),
            FieldKind::Numeric {
                bins,
                mode: NumericMode::Bucket,
            } => Some(bins.k + 1),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: FieldSource,
    pub kind: FieldKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub setting: FeatureSetting,
    pub modal: ModalSpec,
    pub fields: Vec<FieldSpec>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut names = BTreeSet::new();
        for f in &self.fields {
            if !names.insert(f.name.as_str()) {
                return Err(FeatureError::SchemaMismatch(format!("duplicate field {:?}", f.name)));
            }
            if let Some(0) = f.kind.cardinality() {
                return Err(FeatureError::SchemaMismatch(format!("field {:?} has cardinality 0", f.name)));
            }
            if let FieldKind::Numeric { bins, .. } = &f.kind {
                bins.validate()?;
            }
        }
        for required in ["user_id", "item_id"] {
            if !names.contains(required) {
                return Err(FeatureError::SchemaMismatch(format!("missing {required}")));
            }
        }
        Ok(())
    }
}

/// Everything [`build_schema`] fits against.
pub struct SchemaContext<'a> {
    pub users: &'a KeyMap,
    pub items: &'a KeyMap,
    pub user_meta: Option<&'a MetadataTable>,
    pub item_meta: Option<&'a MetadataTable>,
    /// Training pairs; vocabularies and numeric ranges come from their users and items.
    pub fit_pairs: &'a [LabeledPair],
    pub embeddings: Option<&'a LayeredEmbeddings>,
}

#[derive(Default)]
struct MetaSummary {
    categorical: BTreeMap<String, BTreeSet<String>>,
    multi: BTreeMap<String, BTreeSet<String>>,
    numeric: BTreeMap<String, (f64, f64)>,
    all_numeric: BTreeSet<String>,
}

fn summarize<'a>(records: impl Iterator<Item = &'a MetaRecord>, all: Option<&'a MetadataTable>) -> MetaSummary {
    let mut s = MetaSummary::default();
    for r in records {
        for (k, v) in &r.categorical {
            s.categorical.entry(k.clone()).or_default().insert(v.clone());
        }
        for (k, vs) in &r.multi {
            s.multi.entry(k.clone()).or_default().extend(vs.iter().cloned());
        }
        for (k, &v) in &r.numeric {
            let e = s.numeric.entry(k.clone()).or_insert((v, v));
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
    }
    // field names seen anywhere, so a field unseen in train still gets a slot
    for r in all.into_iter().flat_map(|t| t.rows.values()) {
        for k in r.categorical.keys() {
            s.categorical.entry(k.clone()).or_default();
        }
        for k in r.multi.keys() {
            s.multi.entry(k.clone()).or_default();
        }
        s.all_numeric.extend(r.numeric.keys().cloned());
    }
    s
}

fn meta_fields(
    prefix: &str,
    summary: MetaSummary,
    setting: FeatureSetting,
    opts: &SchemaOptions,
    source: impl Fn(String) -> FieldSource,
) -> Result<Vec<FieldSpec>, FeatureError> {
    let mut out = Vec::new();
    for (key, values) in summary.categorical {
        let vocab: Vec<String> = values.into_iter().collect();
        out.push(FieldSpec {
            name: format!("{prefix}:{key}"),
            source: source(key),
            kind: FieldKind::Categorical {
                cardinality: vocab.len() + 1,
                vocab,
            },
        });
    }
    for (key, values) in summary.multi {
        let vocab: Vec<String> = values.into_iter().collect();
        out.push(FieldSpec {
            name: format!("{prefix}:{key}"),
            source: source(key),
            kind: FieldKind::MultiCategorical {
                cardinality: vocab.len() + 1,
                vocab,
            },
        });
    }
    if setting == FeatureSetting::Full {
        for key in summary.all_numeric {
            let (lo, hi) = summary.numeric.get(&key).copied().unwrap_or((0.0, 1.0));
            // a constant training range still needs positive width
            let hi = if hi > lo { hi } else { lo + 1.0 };
            out.push(FieldSpec {
                name: format!("{prefix}:{key}"),
                source: source(key),
                kind: FieldKind::Numeric {
                    bins: NumericBinSpec::new(lo, hi, opts.numeric_bins)?,
                    mode: opts.numeric_mode,
                },
            });
        }
    }
    Ok(out)
}

/// Fits the field list for one feature setting and modal variant.
pub fn build_schema(ctx: &SchemaContext<'_>, opts: &SchemaOptions) -> Result<FeatureSchema, FeatureError> {
    if opts.numeric_bins == 0 {
        return Err(FeatureError::InvalidArgument("numeric_bins must be >= 1".into()));
    }
    let mut fields = vec![
        FieldSpec {
            name: "user_id".into(),
            source: FieldSource::UserId,
            kind: FieldKind::Categorical {
                cardinality: ctx.users.len() + 1,
                vocab: Vec::new(),
            },
        },
        FieldSpec {
            name: "item_id".into(),
            source: FieldSource::ItemId,
            kind: FieldKind::Categorical {
                cardinality: ctx.items.len() + 1,
                vocab: Vec::new(),
            },
        },
    ];
    if opts.setting != FeatureSetting::IdOnly {
        let (users, items) = match (ctx.user_meta, ctx.item_meta) {
            (None, None) => return Err(FeatureError::MissingField("metadata".into())),
            pair => pair,
        };
        if users.is_none_or(|t| t.is_empty()) && items.is_none_or(|t| t.is_empty()) {
            return Err(FeatureError::MissingField("metadata".into()));
        }
        let train_users: BTreeSet<u32> = ctx.fit_pairs.iter().map(|p| p.user).collect();
        let train_items: BTreeSet<u32> = ctx.fit_pairs.iter().map(|p| p.item).collect();
        if let Some(t) = users {
            let recs = train_users.iter().filter_map(|&u| t.get(ctx.users.key(u)));
            let s = summarize(recs, Some(t));
            fields.extend(meta_fields("user", s, opts.setting, opts, |key| FieldSource::UserMeta { key })?);
        }
        if let Some(t) = items {
            let recs = train_items.iter().filter_map(|&i| t.get(ctx.items.key(i)));
            let s = summarize(recs, Some(t));
            fields.extend(meta_fields("item", s, opts.setting, opts, |key| FieldSource::ItemMeta { key })?);
        }
        if opts.setting == FeatureSetting::Full
            && !fields.iter().any(|f| matches!(f.kind, FieldKind::Numeric { .. }))
        {
            return Err(FeatureError::MissingField("numeric".into()));
        }
    }
    if opts.modal != ModalSpec::None {
        let emb = ctx
            .embeddings
            .ok_or_else(|| FeatureError::InvalidArgument(format!("modal {} needs embeddings", opts.modal.tag())))?;
        match opts.modal {
            ModalSpec::MuqDense {
                variant: DenseVariant::AllLayers,
            } => {
                for l in 0..emb.n_layers() {
                    fields.push(FieldSpec {
                        name: format!("audio_{l}"),
                        source: FieldSource::Audio { layer: Some(l) },
                        kind: FieldKind::Dense { dim: emb.audio_dim() },
                    });
                }
            }
            ModalSpec::MuqDense {
                variant: DenseVariant::Mean,
            } => fields.push(FieldSpec {
                name: "audio_mean".into(),
                source: FieldSource::Audio { layer: None },
                kind: FieldKind::Dense { dim: emb.audio_dim() },
            }),
            ModalSpec::MuqToken { k } => {
                if k == 0 {
                    return Err(FeatureError::InvalidArgument("token k must be >= 1".into()));
                }
                for l in 0..emb.n_layers() {
                    fields.push(FieldSpec {
                        name: format!("tok_{l}"),
                        source: FieldSource::Token { layer: l },
                        kind: FieldKind::Token { cardinality: k + 1 },
                    });
                }
            }
            ModalSpec::None => unreachable!(),
        }
        if opts.include_text && emb.text_dim() > 0 {
            fields.push(FieldSpec {
                name: "text".into(),
                source: FieldSource::Text,
                kind: FieldKind::Dense { dim: emb.text_dim() },
            });
        }
    }
    let schema = FeatureSchema {
        setting: opts.setting,
        modal: opts.modal,
        fields,
    };
    schema.validate()?;
    Ok(schema)
}
