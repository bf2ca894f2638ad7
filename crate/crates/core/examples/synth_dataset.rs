//! Generates a synthetic listening log with planted taste clusters, writes it
//! in the on-disk formats and compares empirical positive rates per cluster
//! with the planted probabilities.
//!
//! cargo run --release --example synth_dataset -- [out_dir]

use std::error::Error;
use std::path::PathBuf;

use taste::synth::{cluster_positive_rates, generate, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-example".into()));
    let data = generate(&SynthConfig::default())?;
    let paths = data.write(&out)?;
    println!(
        "{} events, {} users, {} items -> {}",
        data.events.len(),
        data.events.users.len(),
        data.events.items.len(),
        paths.events.display()
    );
    println!("cluster  rate    planted  pairs");
    for (cluster, (rate, expected, n)) in cluster_positive_rates(&data) {
        println!("{cluster:>7}  {rate:.4}  {expected:.4}   {n}");
    }
    Ok(())
}
