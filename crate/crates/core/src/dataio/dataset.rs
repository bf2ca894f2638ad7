//! The ingested dataset artifact.
//!
//! Binary layout (little-endian): magic `TASTEDS1`, `u32` threshold, `u32`
//! core, `u32` n_users, `u32` n_items, `u64` n_pairs, then per pair `u32`
//! user, `u32` item, `u32` count, `u8` label. The `<path>.keys.json` sidecar
//! holds `{"users": [...], "items": [...]}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{sidecar_path, DataError, DatasetKeys, EventLog, KeyMap, LabeledPair};

pub const DATASET_MAGIC: &[u8; 8] = b"TASTEDS1";
const HEADER_LEN: usize = 8 + 4 * 4 + 8;
const RECORD_LEN: usize = 13;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub threshold: u32,
    pub core: u32,
    /// Sorted by `(user, item)`, indices dense over `users` and `items`.
    pub pairs: Vec<LabeledPair>,
    pub users: KeyMap,
    pub items: KeyMap,
}

/// Remaps surviving users and items onto dense indices, in ascending order of
/// their original index, and sorts the pairs.
pub fn compact(pairs: &[LabeledPair], users: &KeyMap, items: &KeyMap) -> (Vec<LabeledPair>, KeyMap, KeyMap) {
    let mut user_ids: BTreeMap<u32, u32> = pairs.iter().map(|p| (p.user, 0)).collect();
    let mut item_ids: BTreeMap<u32, u32> = pairs.iter().map(|p| (p.item, 0)).collect();
    let mut new_users = KeyMap::new();
    for (old, new) in user_ids.iter_mut() {
        *new = new_users.intern(users.key(*old));
    }
    let mut new_items = KeyMap::new();
    for (old, new) in item_ids.iter_mut() {
        *new = new_items.intern(items.key(*old));
    }
    let mut out: Vec<LabeledPair> = pairs
        .iter()
        .map(|p| LabeledPair {
            user: user_ids[&p.user],
            item: item_ids[&p.item],
            ..*p
        })
        .collect();
    out.sort_unstable();
    (out, new_users, new_items)
}

impl Dataset {
    /// Binarizes, k-core filters and compacts an event log.
    pub fn from_events(log: &EventLog, threshold: u32, core: u32) -> Result<Self, DataError> {
        let labeled = super::binarize(&log.events, threshold)?;
        let filtered = super::k_core_filter(&labeled, core as usize)?;
        if filtered.is_empty() {
            return Err(DataError::EmptyInput);
        }
        let (pairs, users, items) = compact(&filtered, &log.users, &log.items);
        Ok(Self {
            threshold,
            core,
            pairs,
            users,
            items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.pairs.len());
        out.extend_from_slice(DATASET_MAGIC);
        for v in [self.threshold, self.core, self.n_users() as u32, self.n_items() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.pairs.len() as u64).to_le_bytes());
        for p in &self.pairs {
            out.extend_from_slice(&p.user.to_le_bytes());
            out.extend_from_slice(&p.item.to_le_bytes());
            out.extend_from_slice(&p.count.to_le_bytes());
            out.push(u8::from(p.label));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], keys: DatasetKeys) -> Result<Self, DataError> {
        if bytes.len() < 8 || &bytes[..8] != DATASET_MAGIC {
            return Err(DataError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::TruncatedFile {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let threshold = u32_at(8);
        let core = u32_at(12);
        let n_users = u32_at(16) as usize;
        let n_items = u32_at(20) as usize;
        let n_pairs = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes")) as usize;
        let expected = HEADER_LEN + RECORD_LEN * n_pairs;
        if bytes.len() < expected {
            return Err(DataError::TruncatedFile {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(DataError::TrailingBytes {
                expected,
                actual: bytes.len(),
            });
        }
        if keys.users.len() != n_users {
            return Err(DataError::KeyMapMismatch {
                expected: n_users,
                actual: keys.users.len(),
            });
        }
        if keys.items.len() != n_items {
            return Err(DataError::KeyMapMismatch {
                expected: n_items,
                actual: keys.items.len(),
            });
        }
        let mut pairs = Vec::with_capacity(n_pairs);
        for r in 0..n_pairs {
            let o = HEADER_LEN + r * RECORD_LEN;
            let p = LabeledPair {
                user: u32_at(o),
                item: u32_at(o + 4),
                count: u32_at(o + 8),
                label: bytes[o + 12] != 0,
            };
            if p.user as usize >= n_users || p.item as usize >= n_items || p.count == 0 {
                return Err(DataError::InvalidArgument(format!("dataset record {r} is out of range")));
            }
            pairs.push(p);
        }
        Ok(Self {
            threshold,
            core,
            pairs,
            users: KeyMap::from_keys(keys.users)?,
            items: KeyMap::from_keys(keys.items)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_bytes()).map_err(|e| DataError::file(path, e))?;
        let keys = DatasetKeys {
            users: self.users.keys().to_vec(),
            items: self.items.keys().to_vec(),
        };
        let sidecar = sidecar_path(path);
        fs::write(&sidecar, serde_json::to_vec_pretty(&keys)?).map_err(|e| DataError::file(&sidecar, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(|e| DataError::file(path, e))?;
        let sidecar = sidecar_path(path);
        let raw = fs::read(&sidecar).map_err(|e| DataError::file(&sidecar, e))?;
        Self::from_bytes(&bytes, serde_json::from_slice(&raw)?)
    }
}
