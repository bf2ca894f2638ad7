//! Builds feature schemas for each setting and modal variant and shows how a
//! single user–item pair is encoded.
//!
//! cargo run --release --example feature_encoding

use std::error::Error;

use taste::dataio::Dataset;
use taste::features::{build_schema, DenseVariant, Encoder, FeatureSetting, ModalSpec, SchemaContext, SchemaOptions};
use taste::muqtoken::tokenize;
use taste::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let data = generate(&SynthConfig::default())?;
    let ds = Dataset::from_events(&data.events, 2, 5)?;
    let (_, tokens) = tokenize(&data.embeddings, 16, 0)?;
    let ctx = SchemaContext {
        users: &ds.users,
        items: &ds.items,
        user_meta: Some(&data.user_meta),
        item_meta: Some(&data.item_meta),
        fit_pairs: &ds.pairs,
        embeddings: Some(&data.embeddings),
    };
    let modals = [
        ModalSpec::None,
        ModalSpec::MuqDense { variant: DenseVariant::Mean },
        ModalSpec::MuqToken { k: 16 },
    ];
    for setting in [FeatureSetting::IdOnly, FeatureSetting::IdCategories, FeatureSetting::Full] {
        for modal in modals {
            let opts = SchemaOptions { setting, modal, ..SchemaOptions::default() };
            let schema = build_schema(&ctx, &opts)?;
            let names: Vec<&str> = schema.fields.iter().map(|f| f.name.as_str()).collect();
            println!("{setting:?}/{modal:?}: {} fields {names:?}", schema.len());
        }
    }
    let opts = SchemaOptions {
        setting: FeatureSetting::Full,
        modal: ModalSpec::MuqToken { k: 16 },
        ..SchemaOptions::default()
    };
    let schema = build_schema(&ctx, &opts)?;
    let enc = Encoder::new(
        schema,
        &ds.users,
        &ds.items,
        Some(&data.user_meta),
        Some(&data.item_meta),
        Some(&tokens),
        Some(&data.embeddings),
    )?;
    println!("{:?}", enc.encode(&ds.pairs[0]));
    Ok(())
}
