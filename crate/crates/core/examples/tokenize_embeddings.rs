//! Turns layered audio embeddings into one discrete token per layer with
//! k-means and prints the layer-by-layer ARI matrix.
//!
//! cargo run --release --example tokenize_embeddings -- [k]

use std::error::Error;

use taste::muqtoken::{adjusted_rand_index, ari_matrix, tokenize};
use taste::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(16);
    let data = generate(&SynthConfig::default())?;
    let (codebooks, tokens) = tokenize(&data.embeddings, k, 0)?;
    for cb in &codebooks.codebooks {
        let truth = adjusted_rand_index(&tokens.column(cb.layer), &data.truth.layer_labels(cb.layer))?;
        println!("layer {}: inertia {:.1}, ARI vs planted {truth:.4}", cb.layer, cb.inertia);
    }
    print!("{}", ari_matrix(&tokens)?.to_csv());
    println!("first item: {} -> {:?}", tokens.items[0], tokens.tokens[0]);
    Ok(())
}
