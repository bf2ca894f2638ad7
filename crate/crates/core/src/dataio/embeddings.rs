//! `TASTEEMB` layered-embedding files.
//!
//! Little-endian layout: magic `TASTEEMB`, `u32` version (1), `u32` N,
//! `u32` L, `u32` H, `u32` d_text, then `N·L·H` audio `f32`s (item-major,
//! layer-major, row-major) and `N·d_text` text `f32`s. Item order comes from
//! the `{"items": [...]}` sidecar written next to the file.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, ItemKeys, KeyMap};

pub const EMB_MAGIC: &[u8; 8] = b"TASTEEMB";
pub const EMB_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 5 * 4;

/// Per-item `(L, H)` pooled audio plus a `d_text` text vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredEmbeddings {
    n_layers: usize,
    audio_dim: usize,
    text_dim: usize,
    items: KeyMap,
    audio: Vec<f32>,
    text: Vec<f32>,
}

impl LayeredEmbeddings {
    pub fn new(
        items: KeyMap,
        n_layers: usize,
        audio_dim: usize,
        text_dim: usize,
        audio: Vec<f32>,
        text: Vec<f32>,
    ) -> Result<Self, DataError> {
        if n_layers == 0 || audio_dim == 0 {
            return Err(DataError::InvalidArgument("embeddings need L >= 1 and H >= 1".into()));
        }
        let n = items.len();
        if audio.len() != n * n_layers * audio_dim || text.len() != n * text_dim {
            return Err(DataError::InvalidArgument(format!(
                "payload sizes ({}, {}) do not match N={n}, L={n_layers}, H={audio_dim}, d_text={text_dim}",
                audio.len(),
                text.len()
            )));
        }
        let out = Self {
            n_layers,
            audio_dim,
            text_dim,
            items,
            audio,
            text,
        };
        out.check_finite()?;
        Ok(out)
    }

    fn check_finite(&self) -> Result<(), DataError> {
        for i in 0..self.len() {
            if !self.audio_row(i).iter().chain(self.text(i)).all(|v| v.is_finite()) {
                return Err(DataError::NonFiniteEmbedding {
                    item: self.items.key(i as u32).to_owned(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn items(&self) -> &KeyMap {
        &self.items
    }

    /// Row of `key` in this file, if present.
    pub fn row_of(&self, key: &str) -> Option<usize> {
        self.items.get(key).map(|i| i as usize)
    }

    /// The full `(L, H)` block of one item, row-major.
    pub fn audio_row(&self, row: usize) -> &[f32] {
        let w = self.n_layers * self.audio_dim;
        &self.audio[row * w..(row + 1) * w]
    }

    pub fn layer(&self, row: usize, layer: usize) -> &[f32] {
        let start = (row * self.n_layers + layer) * self.audio_dim;
        &self.audio[start..start + self.audio_dim]
    }

    pub fn text(&self, row: usize) -> &[f32] {
        &self.text[row * self.text_dim..(row + 1) * self.text_dim]
    }

    /// Mean over layers of an item's audio block, accumulated in `f64`.
    pub fn mean_audio(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; self.audio_dim];
        for l in 0..self.n_layers {
            for (o, &v) in out.iter_mut().zip(self.layer(row, l)) {
                *o += f64::from(v);
            }
        }
        let inv = 1.0 / self.n_layers as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.audio.len() + self.text.len()));
        out.extend_from_slice(EMB_MAGIC);
        for v in [
            EMB_VERSION,
            self.len() as u32,
            self.n_layers as u32,
            self.audio_dim as u32,
            self.text_dim as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.audio.iter().chain(&self.text) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], items: KeyMap) -> Result<Self, DataError> {
        if bytes.len() < 8 || &bytes[..8] != EMB_MAGIC {
            return Err(DataError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::TruncatedFile {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
        let version = word(0) as u32;
        if version != EMB_VERSION {
            return Err(DataError::UnsupportedVersion(version));
        }
        let (n, l, h, d) = (word(1), word(2), word(3), word(4));
        let n_audio = n * l * h;
        let n_text = n * d;
        let expected = HEADER_LEN + 4 * (n_audio + n_text);
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
        if items.len() != n {
            return Err(DataError::KeyMapMismatch {
                expected: n,
                actual: items.len(),
            });
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let (audio, text) = floats.split_at(n_audio);
        Self::new(items, l, h, d, audio.to_vec(), text.to_vec())
    }

    /// Writes the binary file and its `<path>.keys.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_bytes()).map_err(|e| DataError::file(path, e))?;
        let keys = ItemKeys {
            items: self.items.keys().to_vec(),
        };
        let sidecar = sidecar_path(path);
        fs::write(&sidecar, serde_json::to_vec_pretty(&keys)?).map_err(|e| DataError::file(&sidecar, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(|e| DataError::file(path, e))?;
        let sidecar = sidecar_path(path);
        let keys_raw = fs::read(&sidecar).map_err(|e| DataError::file(&sidecar, e))?;
        let keys: ItemKeys = serde_json::from_slice(&keys_raw)?;
        Self::from_bytes(&bytes, KeyMap::from_keys(keys.items)?)
    }
}

/// `<path>.keys.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".keys.json");
    PathBuf::from(s)
}

/// Loads an embedding file; alias kept for symmetry with the other readers.
pub fn load_layered_embeddings(path: &Path) -> Result<LayeredEmbeddings, DataError> {
    LayeredEmbeddings::load(path)
}
