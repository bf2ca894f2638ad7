//! Multi-seed cold-start comparison of ID-only features against audio tokens,
//! with paired t-tests per evaluation split.
//!
//! cargo run --release --example coldstart_study -- [out_dir]

use std::error::Error;

use taste::pipeline::{cmd_coldstart, parse_config};

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "coldstart-example".into());
    let cfg = parse_config(
        &serde_json::json!({
            "out_dir": out,
            "seeds": [0, 1, 2],
            "synth": {"n_users": 200, "n_items": 600, "events_per_user": 150.0},
            "split": {"kind": "cold"},
            "train": {"learning_rate": 0.01, "max_epochs": 15},
            "coldstart": {"models": ["fm"], "variant": {"kind": "muq_token", "k": 16}}
        })
        .to_string(),
    )?;
    let (report, manifest) = cmd_coldstart(&cfg)?;
    for model in &report.models {
        for s in &model.summary {
            println!(
                "{} {}: auc {:.4} -> {:.4} (p {:.2e}), logloss {:.4} -> {:.4}",
                model.model, s.split, s.baseline_auc, s.variant_auc, s.auc_test.p_value, s.baseline_logloss, s.variant_logloss
            );
        }
    }
    println!("{} files written under {out}", manifest.outputs.len());
    Ok(())
}
