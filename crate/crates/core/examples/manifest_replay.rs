//! Runs synth, tokenize, train and eval through the command layer, then
//! replays the eval manifest and confirms every output is byte-identical.
//!
//! cargo run --release --example manifest_replay -- [out_dir]

use std::error::Error;

use taste::pipeline::{parse_config, replay, run, Command, Manifest};

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "replay-example".into());
    let cfg = parse_config(
        &serde_json::json!({
            "out_dir": out,
            "seeds": [0],
            "synth": {"n_users": 100, "n_items": 300, "events_per_user": 100.0},
            "features": {"modal": {"kind": "muq_token", "k": 8}},
            "train": {"learning_rate": 0.01, "max_epochs": 5}
        })
        .to_string(),
    )?;
    for command in [Command::Synth, Command::Tokenize, Command::Train, Command::Eval] {
        let m = run(command, &cfg)?;
        println!("{}: config {} -> {} outputs", command.name(), &m.config_hash[..12], m.outputs.len());
    }
    let outcome = replay(&Manifest::path_for(&cfg.out_dir, Command::Eval))?;
    println!("replay identical: {}", outcome.identical());
    Ok(())
}
