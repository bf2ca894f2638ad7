//! Trains a CTR model on a cold-start split twice, once with only ID fields
//! and once with audio tokens, and reports AUC on warm and cold items.
//!
//! cargo run --release --example ctr_training -- [lr|fm|ffm|afm|wide_deep|deepfm|dcnv2]

use std::error::Error;

use taste::features::{FeatureSetting, ModalSpec, SchemaOptions};
use taste::models::{CtrKind, ModelHyper};
use taste::pipeline::{eval_ctr, fit_ctr, fit_tokens, make_split, synth_inputs, SplitConfig, SplitKind, TokenizeConfig};
use taste::synth::{generate, SynthConfig};
use taste::train::TrainConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fm".into());
    let kind: CtrKind = serde_json::from_value(serde_json::Value::String(name))?;
    let synth = SynthConfig {
        n_users: 200,
        n_items: 600,
        events_per_user: 150.0,
        ..SynthConfig::default()
    };
    let inputs = synth_inputs(generate(&synth)?, 2, 5)?;
    let split_cfg = SplitConfig {
        kind: SplitKind::Cold,
        ..SplitConfig::default()
    };
    let split = make_split(&inputs.dataset.pairs, &split_cfg, 0)?;
    let (_, tokens) = fit_tokens(&inputs, split.train(), 16, 0, &TokenizeConfig::default())?;
    let hyper = ModelHyper::default();
    let train = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    for modal in [ModalSpec::None, ModalSpec::MuqToken { k: 16 }] {
        let opts = SchemaOptions {
            setting: FeatureSetting::IdOnly,
            modal,
            ..SchemaOptions::default()
        };
        let run = fit_ctr(&inputs, &split, &opts, kind, &hyper, &train, Some(&tokens), 0)?;
        print!("{modal:?}: best epoch {} of {}", run.report.best_epoch, run.report.history.len());
        for (set, pairs) in split.eval_sets() {
            let m = eval_ctr(&run.model, &run.encoder, &pairs)?;
            print!(", {set} auc {:.4}", m.auc.unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
