//! Sweeps the token codebook size and reports validation AUC per seed.
//!
//! cargo run --release --example cluster_sweep -- [out_dir]

use std::error::Error;

use taste::pipeline::{cmd_sweep, parse_config};

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep-example".into());
    let cfg = parse_config(
        &serde_json::json!({
            "out_dir": out,
            "seeds": [0, 1],
            "synth": {"n_users": 200, "n_items": 600, "events_per_user": 150.0},
            "split": {"kind": "cold"},
            "train": {"learning_rate": 0.01, "max_epochs": 15},
            "sweep": {"k_list": [4, 16, 32]}
        })
        .to_string(),
    )?;
    let (report, _) = cmd_sweep(&cfg)?;
    print!("{}", report.to_csv());
    for (k, auc) in &report.mean_val_auc {
        println!("k {k}: mean val auc {auc:.4}");
    }
    println!("argmax per seed {:?}", report.argmax);
    Ok(())
}
