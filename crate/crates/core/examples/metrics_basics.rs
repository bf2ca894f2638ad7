//! Classification, ranking and popularity metrics on small hand-made inputs.
//!
//! cargo run --release --example metrics_basics

use std::collections::HashSet;
use std::error::Error;

use taste::metrics::{auc, logloss, popularity_histogram, quantile_edges, topk_metrics};

fn main() -> Result<(), Box<dyn Error>> {
    let labels = [true, false, true, false, true, false];
    let probs = [0.9, 0.2, 0.6, 0.6, 0.4, 0.1];
    println!("auc {:.4}, logloss {:.4}", auc(&labels, &probs)?, logloss(&labels, &probs)?);

    let ranked = vec![vec![3, 1, 4, 5, 9], vec![2, 6, 5, 3, 8]];
    let relevant: Vec<HashSet<u32>> = vec![[1, 9].into(), [7].into()];
    let m = topk_metrics(&ranked, &relevant, 3)?;
    println!(
        "@3 recall {:.4} precision {:.4} ndcg {:.4} mrr {:.4} mrr@k {:.4}",
        m.recall, m.precision, m.ndcg, m.mrr, m.mrr_at_k
    );

    let popularity: Vec<u64> = (0..10).map(|i| 1 << i).collect();
    let values: Vec<f64> = popularity.iter().map(|&p| p as f64).collect();
    let edges = quantile_edges(&values, 4)?;
    let hist = popularity_histogram(&ranked, &popularity, &edges)?;
    println!("edges {:?}", hist.edges);
    println!("share per bin {:?}", hist.frequencies);
    Ok(())
}
