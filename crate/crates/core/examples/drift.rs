//! Generates a dataset, then computes monthly user and item metadata profiles projected to two dimensions.
//!
//! cargo run --release --example drift -- [out_dir]

use std::error::Error;

use taste::pipeline::{cmd_drift, parse_config, run, Command};

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "drift-example".into());
    let cfg = parse_config(
        &serde_json::json!({
            "out_dir": out,
            "synth": {"n_users": 200, "n_items": 600, "events_per_user": 100.0}
        })
        .to_string(),
    )?;
    run(Command::Synth, &cfg)?;
    let (report, _) = cmd_drift(&cfg)?;
    for side in &report.sides {
        println!(
            "{}: {} periods over {} fields, variance share {:?}",
            side.side,
            side.periods.len(),
            side.fields.len(),
            side.projection.variance_share
        );
    }
    Ok(())
}
