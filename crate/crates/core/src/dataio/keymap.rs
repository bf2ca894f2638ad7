use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Interns opaque string keys into dense indices in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyMap {
    keys: Vec<String>,
    index: HashMap<String, u32>,
}

impl KeyMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a map from an ordered key list; duplicates are rejected.
    pub fn from_keys(keys: Vec<String>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i as u32).is_some() {
                return Err(DataError::DuplicateKey(k.clone()));
            }
        }
        Ok(Self { keys, index })
    }

    pub fn intern(&mut self, key: &str) -> u32 {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.keys.len() as u32;
        self.keys.push(key.to_owned());
        self.index.insert(key.to_owned(), i);
        i
    }

    pub fn get(&self, key: &str) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn key(&self, idx: u32) -> &str {
        &self.keys[idx as usize]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Sidecar `{"users": [...], "items": [...]}` written beside dataset artifacts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetKeys {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

/// Sidecar `{"items": [...]}` fixing the item order of an embedding file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemKeys {
    pub items: Vec<String>,
}
