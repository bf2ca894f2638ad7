#![allow(dead_code)]

pub mod golden;
pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taste::dataio::{EntityKind, KeyMap, LabeledPair, LayeredEmbeddings, MetaRecord, MetadataTable};
use taste::features::{build_schema, Encoder, FeatureSchema, SchemaContext, SchemaOptions};
use taste::muqtoken::{tokenize, TokenTable};

/// A handful of users and items with metadata and layered embeddings.
pub struct World {
    pub users: KeyMap,
    pub items: KeyMap,
    pub user_meta: MetadataTable,
    pub item_meta: MetadataTable,
    pub embeddings: LayeredEmbeddings,
    pub tokens: TokenTable,
    pub pairs: Vec<LabeledPair>,
}

pub fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = 4;
    let n_items = 6;
    let users = KeyMap::from_keys((0..n_users).map(|i| format!("u{i}")).collect()).unwrap();
    let items = KeyMap::from_keys((0..n_items).map(|i| format!("i{i}")).collect()).unwrap();
    let mut user_meta = MetadataTable::new(EntityKind::User);
    for u in 0..n_users {
        let mut rec = MetaRecord::default();
        rec.categorical.insert("country".into(), ["se", "us"][u % 2].into());
        rec.numeric.insert("age".into(), 18.0 + 7.0 * u as f64);
        user_meta.rows.insert(format!("u{u}"), rec);
    }
    let mut item_meta = MetadataTable::new(EntityKind::Item);
    for i in 0..n_items {
        let mut rec = MetaRecord::default();
        rec.categorical.insert("artist".into(), format!("a{}", i % 3));
        rec.multi.insert("genres".into(), vec![["rock", "pop", "jazz"][i % 3].into(), "misc".into()]);
        rec.numeric.insert("duration".into(), 120.0 + 20.0 * i as f64);
        item_meta.rows.insert(format!("i{i}"), rec);
    }
    let (l, h, t) = (3, 4, 3);
    let audio: Vec<f32> = (0..n_items * l * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let text: Vec<f32> = (0..n_items * t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let embeddings = LayeredEmbeddings::new(items.clone(), l, h, t, audio, text).unwrap();
    let (_, tokens) = tokenize(&embeddings, 2, seed).unwrap();
    let mut pairs = Vec::new();
    for u in 0..n_users as u32 {
        for i in 0..n_items as u32 {
            if (u + i) % 2 == 0 || i == u {
                pairs.push(LabeledPair {
                    user: u,
                    item: i,
                    count: 1 + (u * i) % 3,
                    label: rng.random_bool(0.5),
                });
            }
        }
    }
    World {
        users,
        items,
        user_meta,
        item_meta,
        embeddings,
        tokens,
        pairs,
    }
}

impl World {
    pub fn schema(&self, opts: &SchemaOptions) -> FeatureSchema {
        let ctx = SchemaContext {
            users: &self.users,
            items: &self.items,
            user_meta: Some(&self.user_meta),
            item_meta: Some(&self.item_meta),
            fit_pairs: &self.pairs,
            embeddings: Some(&self.embeddings),
        };
        build_schema(&ctx, opts).unwrap()
    }

    pub fn encoder(&self, schema: FeatureSchema) -> Encoder {
        Encoder::new(
            schema,
            &self.users,
            &self.items,
            Some(&self.user_meta),
            Some(&self.item_meta),
            Some(&self.tokens),
            Some(&self.embeddings),
        )
        .unwrap()
    }
}

