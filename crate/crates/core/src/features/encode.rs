use std::collections::HashMap;

use super::{bin_numeric, FeatureError, FeatureSchema, FieldKind, FieldSource, FieldSpec, FieldValue, NumericMode};
use crate::dataio::{KeyMap, LabeledPair, LayeredEmbeddings, MetaRecord, MetadataTable};
use crate::muqtoken::TokenTable;
use crate::tensor::Tensor;

/// One encoded example, values in schema field order.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub values: Vec<FieldValue>,
    pub label: bool,
}

/// Modal inputs for one item.
#[derive(Clone, Copy, Debug, Default)]
pub struct ItemSources<'a> {
    pub tokens: Option<&'a [u32]>,
    pub embeddings: Option<(&'a LayeredEmbeddings, usize)>,
}

/// `x · v`, the field-embedding alternative to bucketing.
pub fn field_embed_numeric(x: f64, v: &[f64]) -> Vec<f64> {
    v.iter().map(|w| x * w).collect()
}

fn vocab_index(vocab: &[String], value: &str) -> u32 {
    vocab
        .binary_search_by(|v| v.as_str().cmp(value))
        .map_or(0, |i| i as u32 + 1)
}

fn encode_meta(field: &FieldSpec, key: &str, meta: Option<&MetaRecord>) -> Result<FieldValue, FeatureError> {
    Ok(match &field.kind {
        FieldKind::Categorical { vocab, .. } => {
            let v = meta.and_then(|m| m.categorical.get(key));
            FieldValue::Index(v.map_or(0, |v| vocab_index(vocab, v)))
        }
        FieldKind::MultiCategorical { vocab, .. } => {
            let mut idx: Vec<u32> = meta
                .and_then(|m| m.multi.get(key))
                .map(|vs| vs.iter().map(|v| vocab_index(vocab, v)).collect())
                .unwrap_or_default();
            idx.sort_unstable();
            idx.dedup();
            if idx.is_empty() {
                idx.push(0);
            }
            FieldValue::Bag(idx)
        }
        FieldKind::Numeric { bins, mode } => {
            let x = meta.and_then(|m| m.numeric.get(key)).copied();
            match (mode, x) {
                (NumericMode::Bucket, None) => FieldValue::Index(0),
                (NumericMode::Bucket, Some(x)) => FieldValue::Index(bin_numeric(x, bins)? as u32 + 1),
                (NumericMode::FieldEmbedding, x) => {
                    let x = x.unwrap_or(0.0);
                    if !x.is_finite() {
                        return Err(FeatureError::NonFiniteValue);
                    }
                    FieldValue::Scalar(x)
                }
            }
        }
        _ => return Err(FeatureError::SchemaMismatch(format!("{} is not a metadata field", field.name))),
    })
}

fn encode_item_field(
    field: &FieldSpec,
    item: u32,
    item_key: &str,
    meta: Option<&MetaRecord>,
    sources: ItemSources<'_>,
) -> Result<FieldValue, FeatureError> {
    let missing = || FeatureError::MissingModality(item_key.to_owned());
    Ok(match &field.source {
        FieldSource::ItemId => FieldValue::Index(item + 1),
        FieldSource::ItemMeta { key } => encode_meta(field, key, meta)?,
        FieldSource::Audio { layer } => {
            let (emb, row) = sources.embeddings.ok_or_else(missing)?;
            let v: Vec<f64> = match layer {
                Some(l) => emb.layer(row, *l).iter().map(|&x| f64::from(x)).collect(),
                None => emb.mean_audio(row),
            };
            FieldValue::Dense(v.into())
        }
        FieldSource::Text => {
            let (emb, row) = sources.embeddings.ok_or_else(missing)?;
            FieldValue::Dense(emb.text(row).iter().map(|&x| f64::from(x)).collect())
        }
        FieldSource::Token { layer } => {
            let toks = sources.tokens.ok_or_else(missing)?;
            let t = *toks.get(*layer).ok_or_else(missing)?;
            let card = field.kind.cardinality().unwrap_or(0) as u32;
            if t + 1 >= card {
                return Err(FeatureError::SchemaMismatch(format!(
                    "token {t} exceeds {} cardinality {card}",
                    field.name
                )));
            }
            FieldValue::Index(t + 1)
        }
        _ => return Err(FeatureError::SchemaMismatch(format!("{} is not an item field", field.name))),
    })
}

fn encode_user_field(field: &FieldSpec, user: u32, meta: Option<&MetaRecord>) -> Result<FieldValue, FeatureError> {
    match &field.source {
        FieldSource::UserId => Ok(FieldValue::Index(user + 1)),
        FieldSource::UserMeta { key } => encode_meta(field, key, meta),
        _ => Err(FeatureError::SchemaMismatch(format!("{} is not a user field", field.name))),
    }
}

/// Encodes a single pair from raw inputs.
pub fn encode_row(
    schema: &FeatureSchema,
    pair: &LabeledPair,
    item_key: &str,
    user_meta: Option<&MetaRecord>,
    item_meta: Option<&MetaRecord>,
    sources: ItemSources<'_>,
) -> Result<Instance, FeatureError> {
    let values = schema
        .fields
        .iter()
        .map(|f| {
            if f.source.is_user() {
                encode_user_field(f, pair.user, user_meta)
            } else {
                encode_item_field(f, pair.item, item_key, item_meta, sources)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Instance {
        values,
        label: pair.label,
    })
}

/// Caches per-user and per-item payloads so pairs encode by lookup.
#[derive(Clone, Debug)]
pub struct Encoder {
    schema: FeatureSchema,
    user_values: Vec<Vec<FieldValue>>,
    item_values: Vec<Vec<FieldValue>>,
    user_side: Vec<bool>,
}

impl Encoder {
    pub fn new(
        schema: FeatureSchema,
        users: &KeyMap,
        items: &KeyMap,
        user_meta: Option<&MetadataTable>,
        item_meta: Option<&MetadataTable>,
        tokens: Option<&TokenTable>,
        embeddings: Option<&LayeredEmbeddings>,
    ) -> Result<Self, FeatureError> {
        schema.validate()?;
        let user_side: Vec<bool> = schema.fields.iter().map(|f| f.source.is_user()).collect();
        let token_rows: HashMap<&str, usize> = tokens
            .map(|t| t.items.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect())
            .unwrap_or_default();
        let mut user_values = Vec::with_capacity(users.len());
        for u in 0..users.len() as u32 {
            let meta = user_meta.and_then(|t| t.get(users.key(u)));
            let vals = schema
                .fields
                .iter()
                .filter(|f| f.source.is_user())
                .map(|f| encode_user_field(f, u, meta))
                .collect::<Result<Vec<_>, _>>()?;
            user_values.push(vals);
        }
        let mut item_values = Vec::with_capacity(items.len());
        for i in 0..items.len() as u32 {
            let key = items.key(i);
            let meta = item_meta.and_then(|t| t.get(key));
            let sources = ItemSources {
                tokens: tokens.and_then(|t| token_rows.get(key).map(|&r| t.tokens[r].as_slice())),
                embeddings: embeddings.and_then(|e| e.row_of(key).map(|r| (e, r))),
            };
            let vals = schema
                .fields
                .iter()
                .filter(|f| !f.source.is_user())
                .map(|f| encode_item_field(f, i, key, meta, sources))
                .collect::<Result<Vec<_>, _>>()?;
            item_values.push(vals);
        }
        Ok(Self {
            schema,
            user_values,
            item_values,
            user_side,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_users(&self) -> usize {
        self.user_values.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_values.len()
    }

    fn value(&self, field: usize, user: u32, item: u32) -> &FieldValue {
        // position of `field` among the fields of its own side
        let side = self.user_side[field];
        let pos = self.user_side[..field].iter().filter(|&&s| s == side).count();
        if side {
            &self.user_values[user as usize][pos]
        } else {
            &self.item_values[item as usize][pos]
        }
    }

    pub fn encode(&self, pair: &LabeledPair) -> Instance {
        Instance {
            values: (0..self.schema.len()).map(|f| self.value(f, pair.user, pair.item).clone()).collect(),
            label: pair.label,
        }
    }

    /// Column-major batch over `(user, item)` pairs.
    pub fn batch_for(&self, users: &[u32], items: &[u32], labels: Vec<f64>) -> Batch {
        let positions: Vec<usize> = (0..self.schema.len())
            .map(|f| {
                let side = self.user_side[f];
                self.user_side[..f].iter().filter(|&&s| s == side).count()
            })
            .collect();
        let columns = self
            .schema
            .fields
            .iter()
            .enumerate()
            .map(|(f, spec)| {
                let get = |r: usize| {
                    if self.user_side[f] {
                        &self.user_values[users[r] as usize][positions[f]]
                    } else {
                        &self.item_values[items[r] as usize][positions[f]]
                    }
                };
                Column::collect(spec, (0..users.len()).map(get))
            })
            .collect();
        Batch {
            columns,
            labels,
            len: users.len(),
        }
    }

    pub fn batch(&self, pairs: &[LabeledPair]) -> Batch {
        let users: Vec<u32> = pairs.iter().map(|p| p.user).collect();
        let items: Vec<u32> = pairs.iter().map(|p| p.item).collect();
        self.batch_for(&users, &items, pairs.iter().map(LabeledPair::target).collect())
    }
}

/// One field's values across a batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Index(Vec<usize>),
    Bag(Vec<Vec<usize>>),
    /// `(batch, dim)`.
    Dense(Tensor),
    /// `(batch, 1)`.
    Scalar(Tensor),
}

impl Column {
    fn collect<'a>(spec: &FieldSpec, values: impl Iterator<Item = &'a FieldValue>) -> Column {
        let values: Vec<&FieldValue> = values.collect();
        let n = values.len();
        match &spec.kind {
            FieldKind::Dense { dim } => {
                let mut data = Vec::with_capacity(n * dim);
                for v in &values {
                    if let FieldValue::Dense(x) = v {
                        data.extend_from_slice(x);
                    }
                }
                Column::Dense(Tensor::new(vec![n, *dim], data).expect("dense width matches schema"))
            }
            FieldKind::MultiCategorical { .. } => Column::Bag(
                values
                    .iter()
                    .map(|v| match v {
                        FieldValue::Bag(b) => b.iter().map(|&i| i as usize).collect(),
                        _ => vec![0],
                    })
                    .collect(),
            ),
            FieldKind::Numeric {
                mode: NumericMode::FieldEmbedding,
                ..
            } => {
                let data = values
                    .iter()
                    .map(|v| match v {
                        FieldValue::Scalar(x) => *x,
                        _ => 0.0,
                    })
                    .collect();
                Column::Scalar(Tensor::new(vec![n, 1], data).expect("one value per row"))
            }
            _ => Column::Index(
                values
                    .iter()
                    .map(|v| match v {
                        FieldValue::Index(i) => *i as usize,
                        _ => 0,
                    })
                    .collect(),
            ),
        }
    }
}

/// Column-major model input.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub columns: Vec<Column>,
    pub labels: Vec<f64>,
    pub len: usize,
}

impl Batch {
    pub fn from_instances(schema: &FeatureSchema, instances: &[Instance]) -> Result<Batch, FeatureError> {
        if let Some(bad) = instances.iter().find(|i| i.values.len() != schema.len()) {
            return Err(FeatureError::SchemaMismatch(format!(
                "instance has {} values, schema has {} fields",
                bad.values.len(),
                schema.len()
            )));
        }
        let columns = schema
            .fields
            .iter()
            .enumerate()
            .map(|(f, spec)| Column::collect(spec, instances.iter().map(|i| &i.values[f])))
            .collect();
        Ok(Batch {
            columns,
            labels: instances.iter().map(|i| if i.label { 1.0 } else { 0.0 }).collect(),
            len: instances.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::EntityKind;
    use crate::features::{build_schema, FeatureSetting, ModalSpec, SchemaContext, SchemaOptions};

    fn setup() -> (KeyMap, KeyMap, MetadataTable, LayeredEmbeddings, TokenTable) {
        let users = KeyMap::from_keys(vec!["u0".into()]).unwrap();
        let items = KeyMap::from_keys(vec!["a".into(), "b".into()]).unwrap();
        let mut meta = MetadataTable::new(EntityKind::Item);
        let mut r = MetaRecord::default();
        r.categorical.insert("genre".into(), "rock".into());
        r.multi.insert("tags".into(), vec!["z".into(), "y".into(), "z".into()]);
        meta.rows.insert("a".into(), r);
        let mut r = MetaRecord::default();
        r.categorical.insert("genre".into(), "vaporwave".into());
        meta.rows.insert("b".into(), r);
        let emb = LayeredEmbeddings::new(items.clone(), 3, 2, 2, vec![1.0; 12], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let tokens = TokenTable {
            items: vec!["a".into(), "b".into()],
            k: vec![8, 8, 8],
            tokens: vec![vec![3, 3, 7], vec![0, 1, 2]],
        };
        (users, items, meta, emb, tokens)
    }

    #[test]
    fn unseen_category_tokens_and_zero_text() {
        let (users, items, meta, emb, tokens) = setup();
        let train = [LabeledPair { user: 0, item: 0, count: 2, label: true }];
        let ctx = SchemaContext {
            users: &users,
            items: &items,
            user_meta: None,
            item_meta: Some(&meta),
            fit_pairs: &train,
            embeddings: Some(&emb),
        };
        let opts = SchemaOptions {
            setting: FeatureSetting::IdCategories,
            modal: ModalSpec::MuqToken { k: 8 },
            ..Default::default()
        };
        let schema = build_schema(&ctx, &opts).unwrap();
        let enc = Encoder::new(schema.clone(), &users, &items, None, Some(&meta), Some(&tokens), Some(&emb)).unwrap();
        let a = enc.encode(&train[0]);
        let b = enc.encode(&LabeledPair { user: 0, item: 1, count: 1, label: false });
        let at = |inst: &Instance, name: &str| {
            let pos = schema.fields.iter().position(|f| f.name == name).unwrap();
            inst.values[pos].clone()
        };
        assert_eq!(at(&a, "item:genre"), FieldValue::Index(1));
        assert_eq!(at(&b, "item:genre"), FieldValue::Index(0));
        assert_eq!(at(&a, "item:tags"), FieldValue::Bag(vec![1, 2]));
        let toks: Vec<_> = (0..3).map(|l| at(&a, &format!("tok_{l}"))).collect();
        assert_eq!(toks, vec![FieldValue::Index(4), FieldValue::Index(4), FieldValue::Index(8)]);
        assert_eq!(at(&b, "text"), FieldValue::Dense(vec![0.0, 0.0].into()));

        let direct = encode_row(
            &schema,
            &train[0],
            "a",
            None,
            meta.get("a"),
            ItemSources {
                tokens: Some(&tokens.tokens[0]),
                embeddings: Some((&emb, 0)),
            },
        )
        .unwrap();
        assert_eq!(direct, a);
    }

    #[test]
    fn missing_audio_is_reported() {
        let (users, items, _, emb, tokens) = setup();
        let only_a = LayeredEmbeddings::new(
            KeyMap::from_keys(vec!["a".into()]).unwrap(),
            3,
            2,
            2,
            vec![1.0; 6],
            vec![0.0; 2],
        )
        .unwrap();
        let ctx = SchemaContext {
            users: &users,
            items: &items,
            user_meta: None,
            item_meta: None,
            fit_pairs: &[],
            embeddings: Some(&emb),
        };
        let opts = SchemaOptions {
            modal: ModalSpec::MuqDense { variant: Default::default() },
            ..Default::default()
        };
        let schema = build_schema(&ctx, &opts).unwrap();
        let err = Encoder::new(schema, &users, &items, None, None, Some(&tokens), Some(&only_a)).unwrap_err();
        assert_eq!(err, FeatureError::MissingModality("b".into()));
    }

    #[test]
    fn field_embedding_scales() {
        assert_eq!(field_embed_numeric(0.0, &[0.5, -1.0]), vec![0.0, -0.0]);
        assert_eq!(field_embed_numeric(1.0, &[0.5, -1.0]), vec![0.5, -1.0]);
        assert_eq!(field_embed_numeric(2.0, &[0.5, -1.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn batch_matches_instances() {
        let (users, items, meta, emb, tokens) = setup();
        let ctx = SchemaContext {
            users: &users,
            items: &items,
            user_meta: None,
            item_meta: Some(&meta),
            fit_pairs: &[],
            embeddings: Some(&emb),
        };
        let opts = SchemaOptions {
            setting: FeatureSetting::IdCategories,
            modal: ModalSpec::MuqToken { k: 8 },
            ..Default::default()
        };
        let schema = build_schema(&ctx, &opts).unwrap();
        let enc = Encoder::new(schema.clone(), &users, &items, None, Some(&meta), Some(&tokens), Some(&emb)).unwrap();
        let pairs = [
            LabeledPair { user: 0, item: 1, count: 1, label: false },
            LabeledPair { user: 0, item: 0, count: 3, label: true },
        ];
        let inst: Vec<Instance> = pairs.iter().map(|p| enc.encode(p)).collect();
        assert_eq!(Batch::from_instances(&schema, &inst).unwrap(), enc.batch(&pairs));
    }
}
