//! Seeded per-user random splits and the item cold-start protocol.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledPair};

/// Train/validation/test proportions; must be positive and sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DataError::InvalidRatios(all));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidRatios(all));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cold-start partition: cold items never occur in `train`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColdSplitSet {
    pub train: Vec<LabeledPair>,
    pub warm_validation: Vec<LabeledPair>,
    pub warm_test: Vec<LabeledPair>,
    pub cold_validation: Vec<LabeledPair>,
    pub cold_test: Vec<LabeledPair>,
    pub cold_items: BTreeSet<u32>,
}

impl ColdSplitSet {
    /// Warm ∪ cold validation pairs.
    pub fn validation(&self) -> Vec<LabeledPair> {
        [self.warm_validation.as_slice(), self.cold_validation.as_slice()].concat()
    }

    /// Warm ∪ cold test pairs.
    pub fn test(&self) -> Vec<LabeledPair> {
        [self.warm_test.as_slice(), self.cold_test.as_slice()].concat()
    }

    /// The combined view used by the CTR pipeline.
    pub fn as_split(&self) -> SplitSet {
        SplitSet {
            train: self.train.clone(),
            validation: self.validation(),
            test: self.test(),
        }
    }
}

fn cut(n: usize, fraction: f64) -> usize {
    // the epsilon keeps 10 × 0.8 at 8 despite binary rounding
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

/// Splits each user's pairs independently: shuffle with the seeded generator,
/// then take `⌊n·r_val⌋` validation and `⌊n·r_test⌋` test pairs from the tail;
/// the remainder (including rounding leftovers) is train.
pub fn split_random(pairs: &[LabeledPair], ratios: SplitRatios, seed: u64) -> Result<SplitSet, DataError> {
    ratios.validate()?;
    let mut by_user: BTreeMap<u32, Vec<LabeledPair>> = BTreeMap::new();
    for p in pairs {
        by_user.entry(p.user).or_default().push(*p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitSet::default();
    for (_, mut user_pairs) in by_user {
        user_pairs.sort_unstable();
        user_pairs.shuffle(&mut rng);
        let n = user_pairs.len();
        let n_val = cut(n, ratios.validation);
        let n_test = cut(n, ratios.test);
        let a = n - n_val - n_test;
        let b = a + n_val;
        out.train.extend_from_slice(&user_pairs[..a]);
        out.validation.extend_from_slice(&user_pairs[a..b]);
        out.test.extend_from_slice(&user_pairs[b..]);
    }
    Ok(out)
}

/// Samples `⌊|items|·cold_fraction⌋` cold items, alternates their pairs
/// between cold validation and cold test, and splits the warm remainder
/// with [`split_random`].
pub fn split_cold_start(
    pairs: &[LabeledPair],
    cold_fraction: f64,
    ratios: SplitRatios,
    seed: u64,
) -> Result<ColdSplitSet, DataError> {
    if !(cold_fraction > 0.0 && cold_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "cold_fraction must lie in (0, 1), got {cold_fraction}"
        )));
    }
    ratios.validate()?;
    let items: BTreeSet<u32> = pairs.iter().map(|p| p.item).collect();
    let n_cold = cut(items.len(), cold_fraction);
    if n_cold == 0 {
        return Err(DataError::DegenerateColdFraction {
            items: items.len(),
            fraction: cold_fraction,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<u32> = items.into_iter().collect();
    shuffled.shuffle(&mut rng);
    let cold_items: BTreeSet<u32> = shuffled[..n_cold].iter().copied().collect();

    let (mut cold, warm): (Vec<LabeledPair>, Vec<LabeledPair>) =
        pairs.iter().partition(|p| cold_items.contains(&p.item));
    cold.sort_unstable();
    cold.shuffle(&mut rng);
    let mut out = ColdSplitSet {
        cold_items,
        ..Default::default()
    };
    for (i, p) in cold.into_iter().enumerate() {
        if i % 2 == 0 {
            out.cold_validation.push(p);
        } else {
            out.cold_test.push(p);
        }
    }
    let warm_split = split_random(&warm, ratios, rng.next_u64())?;
    out.train = warm_split.train;
    out.warm_validation = warm_split.validation;
    out.warm_test = warm_split.test;
    Ok(out)
}
