//! Parses an events TSV, binarizes repeat listens, applies the 5-core filter
//! and draws both a random and a cold-start split.
//!
//! cargo run --release --example ingest_and_split

use std::error::Error;

use taste::dataio::{binarize, k_core_filter, parse_interactions_from, split_cold_start, split_random, SplitRatios};
use taste::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let data = generate(&SynthConfig::default())?;
    let dir = std::env::temp_dir().join("taste-ingest-example");
    let paths = data.write(&dir)?;

    let log = parse_interactions_from(std::io::BufReader::new(std::fs::File::open(&paths.events)?))?;
    let pairs = binarize(&log.events, 2)?;
    let core = k_core_filter(&pairs, 5)?;
    let positives = core.iter().filter(|p| p.label).count();
    println!("{} events -> {} pairs -> {} after 5-core ({positives} positive)", log.len(), pairs.len(), core.len());

    let random = split_random(&core, SplitRatios::default(), 0)?;
    println!("random split: train {} / val {} / test {}", random.train.len(), random.validation.len(), random.test.len());

    let cold = split_cold_start(&core, 0.2, SplitRatios::default(), 0)?;
    println!(
        "cold split: {} cold items, train {}, warm val/test {}/{}, cold val/test {}/{}",
        cold.cold_items.len(),
        cold.train.len(),
        cold.warm_validation.len(),
        cold.warm_test.len(),
        cold.cold_validation.len(),
        cold.cold_test.len()
    );
    Ok(())
}
