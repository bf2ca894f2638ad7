use super::MetricError;

pub const LOGLOSS_CLIP: f64 = 1e-7;

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Rank-sum form with average ranks over tied scores.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::LengthMismatch {
            what: "auc",
            left: labels.len(),
            right: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the positive rank sum, kept integral so ties stay exact
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        // ranks i+1..=j average to (i+1+j)/2
        rank_sum_x2 += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

/// Mean binary cross-entropy with probabilities clipped to `[1e-7, 1 − 1e-7]`.
pub fn logloss(labels: &[bool], probs: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != probs.len() {
        return Err(MetricError::LengthMismatch {
            what: "logloss",
            left: labels.len(),
            right: probs.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricError::EmptyInput("logloss"));
    }
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted() {
        assert_eq!(auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(auc(&[true, false], &[0.3, 0.3]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert_eq!(auc(&[true, true], &[0.1, 0.2]), Err(MetricError::UndefinedAuc));
    }

    #[test]
    fn logloss_closed_forms() {
        assert!((logloss(&[true], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let v = logloss(&[true, false], &[0.8, 0.4]).unwrap();
        assert!((v - 0.366_984_6).abs() < 1e-7);
        let perfect = logloss(&[true, false], &[1.0, 0.0]).unwrap();
        assert!(perfect > 0.0 && perfect <= 1e-6);
        assert!(logloss(&[], &[]).is_err());
    }
}
