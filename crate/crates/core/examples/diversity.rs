//! Top-K recommendation popularity for ID-only and token models on a
//! long-tailed catalogue.
//!
//! cargo run --release --example diversity -- [out_dir]

use std::error::Error;

use taste::pipeline::{cmd_diversity, parse_config};
use taste::synth::SynthConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "diversity-example".into());
    let synth = SynthConfig {
        n_users: 200,
        n_items: 600,
        events_per_user: 150.0,
        ..SynthConfig::long_tail()
    };
    let cfg = parse_config(
        &serde_json::json!({
            "out_dir": out,
            "seeds": [0],
            "synth": synth,
            "train": {"learning_rate": 0.01, "max_epochs": 15},
            "diversity": {"variant": {"kind": "muq_token", "k": 16}, "users": 100}
        })
        .to_string(),
    )?;
    let (report, _) = cmd_diversity(&cfg)?;
    for run in &report.runs {
        println!(
            "seed {}: tail mass {:.3} (id) vs {:.3} (token), tail threshold {:.1}",
            run.seed, run.baseline_tail_mass, run.variant_tail_mass, run.tail_threshold
        );
        println!("  id    {:?}", run.baseline.frequencies);
        println!("  token {:?}", run.variant.frequencies);
    }
    Ok(())
}
