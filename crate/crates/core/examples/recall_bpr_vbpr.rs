//! Compares pairwise recall models with and without item content features.
//!
//! cargo run --release --example recall_bpr_vbpr

use std::error::Error;

use taste::models::{ModelHyper, RecallKind, VbprInput};
use taste::pipeline::{eval_recall, fit_recall, make_split, synth_inputs, SplitConfig};
use taste::synth::{generate, SynthConfig};
use taste::train::TrainConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let synth = SynthConfig {
        n_users: 200,
        n_items: 600,
        events_per_user: 150.0,
        ..SynthConfig::default()
    };
    let inputs = synth_inputs(generate(&synth)?, 2, 5)?;
    let split = make_split(&inputs.dataset.pairs, &SplitConfig::default(), 0)?;
    let hyper = ModelHyper::default();
    let train = TrainConfig {
        learning_rate: 0.01,
        batch_size: 512,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let (_, test) = &split.eval_sets()[0];
    for kind in [RecallKind::Bpr, RecallKind::Vbpr] {
        let run = fit_recall(&inputs, &split, kind, VbprInput::MeanPooled, &hyper, &train, 0)?;
        let report = eval_recall(&run.model, split.train(), test, &[10, 20])?;
        for (k, m) in &report.topk {
            println!(
                "{} @{k}: recall {:.4} precision {:.4} ndcg {:.4} mrr {:.4} over {} users",
                kind.name(),
                m.recall,
                m.precision,
                m.ndcg,
                m.mrr,
                m.users
            );
        }
    }
    Ok(())
}
