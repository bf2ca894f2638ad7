use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{TokenError, TokenTable};

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand Index from the contingency table. When the chance-corrected
/// denominator vanishes the two partitions coincide and 1.0 is returned.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> Result<f64, TokenError> {
    if a.len() != b.len() {
        return Err(TokenError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(TokenError::DegenerateInput(n));
    }
    let mut table: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(n as u64);
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Symmetric `L × L` matrix of pairwise layer ARIs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AriMatrix {
    pub values: Vec<Vec<f64>>,
}

impl AriMatrix {
    pub fn layers(&self) -> usize {
        self.values.len()
    }

    /// Mean of `M[l][l+gap]` over all valid `l`.
    pub fn mean_at_gap(&self, gap: usize) -> Option<f64> {
        let l = self.layers();
        if gap >= l {
            return None;
        }
        let vals: Vec<f64> = (0..l - gap).map(|i| self.values[i][i + gap]).collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Header `layer,0,1,…`; one row per layer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer");
        for j in 0..self.layers() {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn ari_matrix(tokens: &TokenTable) -> Result<AriMatrix, TokenError> {
    let l = tokens.n_layers();
    let columns: Vec<Vec<u32>> = (0..l).map(|j| tokens.column(j)).collect();
    let mut values = vec![vec![1.0; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            let v = adjusted_rand_index(&columns[i], &columns[j])?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    if l > 0 && columns[0].len() < 2 {
        return Err(TokenError::DegenerateInput(columns[0].len()));
    }
    Ok(AriMatrix { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_relabelled() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn crossed_partition() {
        // index 0, expected (2·2)/6, max 2  →  (0 − 2/3)/(2 − 2/3) = −0.5
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_cluster_both_sides() {
        assert_eq!(adjusted_rand_index(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn too_short() {
        assert!(matches!(adjusted_rand_index(&[0], &[0]), Err(TokenError::DegenerateInput(1))));
    }
}
