use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Top-K ranking metrics averaged over users with a non-empty relevant set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
    /// Reciprocal rank of the first hit anywhere in the ranked list.
    pub mrr: f64,
    /// Reciprocal rank counted only when the first hit is within the top K.
    pub mrr_at_k: f64,
    pub users: usize,
}

/// Per-user values for one ranked list, or `None` when nothing is relevant.
pub fn user_topk(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Option<TopK> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut first_hit = None;
    for (pos, item) in ranked.iter().enumerate() {
        if relevant.contains(item) {
            if first_hit.is_none() {
                first_hit = Some(pos + 1);
            }
            if pos < k {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
    }
    let ideal_hits = relevant.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    let rr = first_hit.map_or(0.0, |r| 1.0 / r as f64);
    Some(TopK {
        recall: hits as f64 / relevant.len() as f64,
        precision: hits as f64 / k as f64,
        ndcg: dcg / idcg,
        mrr: rr,
        mrr_at_k: if first_hit.is_some_and(|r| r <= k) { rr } else { 0.0 },
        users: 1,
    })
}

/// Averages [`user_topk`] over users in input order.
pub fn topk_metrics(ranked: &[Vec<u32>], relevant: &[HashSet<u32>], k: usize) -> Result<TopK, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidArgument("K must be >= 1".into()));
    }
    if ranked.len() != relevant.len() {
        return Err(MetricError::LengthMismatch {
            what: "topk_metrics",
            left: ranked.len(),
            right: relevant.len(),
        });
    }
    let mut sum = TopK::default();
    for (r, rel) in ranked.iter().zip(relevant) {
        if let Some(u) = user_topk(r, rel, k) {
            sum.recall += u.recall;
            sum.precision += u.precision;
            sum.ndcg += u.ndcg;
            sum.mrr += u.mrr;
            sum.mrr_at_k += u.mrr_at_k;
            sum.users += 1;
        }
    }
    if sum.users == 0 {
        return Err(MetricError::EmptyInput("topk_metrics"));
    }
    let n = sum.users as f64;
    Ok(TopK {
        recall: sum.recall / n,
        precision: sum.precision / n,
        ndcg: sum.ndcg / n,
        mrr: sum.mrr / n,
        mrr_at_k: sum.mrr_at_k / n,
        users: sum.users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[u32]) -> HashSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn second_position_hit() {
        let m = topk_metrics(&[vec![1, 0]], &[set(&[0])], 2).unwrap();
        assert_eq!((m.recall, m.precision, m.mrr), (1.0, 0.5, 0.5));
        assert!((m.ndcg - 0.630_930).abs() < 1e-6);
    }

    #[test]
    fn ideal_ranking_scores_one() {
        let m = topk_metrics(&[vec![4, 2, 9]], &[set(&[4, 2])], 3).unwrap();
        assert_eq!((m.recall, m.ndcg, m.mrr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn miss_scores_zero_and_truncated_mrr_differs() {
        let m = topk_metrics(&[vec![1, 2, 3]], &[set(&[7])], 2).unwrap();
        assert_eq!((m.recall, m.precision, m.ndcg, m.mrr), (0.0, 0.0, 0.0, 0.0));
        let m = topk_metrics(&[vec![1, 2, 3]], &[set(&[3])], 2).unwrap();
        assert!((m.mrr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.mrr_at_k, 0.0);
    }

    #[test]
    fn users_without_relevance_are_skipped() {
        let m = topk_metrics(&[vec![0], vec![0]], &[set(&[]), set(&[0])], 1).unwrap();
        assert_eq!(m.users, 1);
        assert!(topk_metrics(&[vec![0]], &[set(&[])], 1).is_err());
    }
}
