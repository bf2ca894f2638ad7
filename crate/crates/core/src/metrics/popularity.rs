use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::dataio::LabeledPair;

/// Normalised frequency of recommended items per popularity bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityHistogram {
    pub edges: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub recommendations: usize,
}

impl PopularityHistogram {
    pub fn bins(&self) -> usize {
        self.frequencies.len()
    }

    /// CSV rows `bin,lower,upper,frequency`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,frequency\n");
        for (b, f) in self.frequencies.iter().enumerate() {
            out.push_str(&format!("{b},{},{},{f}\n", self.edges[b], self.edges[b + 1]));
        }
        out
    }
}

/// Train-set interaction count per item (distinct pairs, both labels).
pub fn item_popularity(train: &[LabeledPair], n_items: usize) -> Vec<u64> {
    let mut pop = vec![0u64; n_items];
    for p in train {
        pop[p.item as usize] += 1;
    }
    pop
}

/// Bin `b` covers `[edges[b], edges[b+1])`; values outside the edges clamp
/// into the first or last bin.
pub fn bin_index(value: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    let upper = edges[1..].partition_point(|&e| e <= value);
    upper.min(bins - 1)
}

/// Strictly increasing edges at the `0, 1/n, …, 1` quantiles of `values`
/// (nearest-rank), merging duplicates. The last edge sits just above the max
/// so the largest value falls inside the final bin.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Result<Vec<f64>, MetricError> {
    if values.is_empty() || n_bins == 0 {
        return Err(MetricError::EmptyInput("quantile_edges"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins + 1);
    for q in 0..n_bins {
        let idx = (q * n) / n_bins;
        let v = sorted[idx.min(n - 1)];
        if edges.last().is_none_or(|&e| v > e) {
            edges.push(v);
        }
    }
    let top = sorted[n - 1] + 1.0;
    if edges.last().is_none_or(|&e| top > e) {
        edges.push(top);
    }
    Ok(edges)
}

pub fn popularity_histogram(
    recommendations: &[Vec<u32>],
    popularity: &[u64],
    edges: &[f64],
) -> Result<PopularityHistogram, MetricError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MetricError::InvalidArgument("bin edges must be strictly increasing".into()));
    }
    let mut counts = vec![0usize; edges.len() - 1];
    let mut total = 0usize;
    for list in recommendations {
        for &item in list {
            let pop = popularity.get(item as usize).copied().unwrap_or(0);
            counts[bin_index(pop as f64, edges)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::EmptyInput("popularity_histogram"));
    }
    Ok(PopularityHistogram {
        edges: edges.to_vec(),
        frequencies: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        recommendations: total,
    })
}
