use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_kmeans, Codebook, KMeansOptions, Points, TokenError};
use crate::dataio::LayeredEmbeddings;

pub const TOKEN_CSV_ID: &str = "item_id";

/// Per-layer codebooks fitted together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenCodebooks {
    pub codebooks: Vec<Codebook>,
}

impl TokenCodebooks {
    pub fn n_layers(&self) -> usize {
        self.codebooks.len()
    }

    /// Token sequence for every item in `embeddings`.
    pub fn assign(&self, embeddings: &LayeredEmbeddings) -> Result<TokenTable, TokenError> {
        if embeddings.n_layers() != self.n_layers() {
            return Err(TokenError::Dimension {
                expected: self.n_layers(),
                actual: embeddings.n_layers(),
            });
        }
        if let Some(cb) = self.codebooks.iter().find(|cb| cb.dim != embeddings.audio_dim()) {
            return Err(TokenError::Dimension {
                expected: cb.dim,
                actual: embeddings.audio_dim(),
            });
        }
        let tokens: Vec<Vec<u32>> = (0..embeddings.len())
            .into_par_iter()
            .map(|row| {
                self.codebooks
                    .iter()
                    .enumerate()
                    .map(|(l, cb)| {
                        let x: Vec<f64> = embeddings.layer(row, l).iter().map(|&v| f64::from(v)).collect();
                        cb.assign(&x)
                    })
                    .collect()
            })
            .collect();
        Ok(TokenTable {
            items: embeddings.items().keys().to_vec(),
            k: self.codebooks.iter().map(|c| c.k).collect(),
            tokens,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), TokenError> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|source| TokenError::File {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TokenError> {
        let raw = fs::read(path).map_err(|source| TokenError::File {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_slice(&raw)?)
    }
}

/// Per-item token sequences, one id per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenTable {
    pub items: Vec<String>,
    /// Cluster count per layer.
    pub k: Vec<usize>,
    pub tokens: Vec<Vec<u32>>,
}

impl TokenTable {
    pub fn n_layers(&self) -> usize {
        self.k.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn column(&self, layer: usize) -> Vec<u32> {
        self.tokens.iter().map(|t| t[layer]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TOKEN_CSV_ID);
        for l in 0..self.n_layers() {
            out.push_str(&format!(",tok_{l}"));
        }
        out.push('\n');
        for (item, toks) in self.items.iter().zip(&self.tokens) {
            out.push_str(item);
            for t in toks {
                out.push_str(&format!(",{t}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`TokenTable::to_csv`] output; `k` is supplied by the codebooks.
    pub fn from_csv(text: &str, k: Vec<usize>) -> Result<Self, TokenError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(TokenError::BadCsv {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        let expected_cols: Vec<String> = std::iter::once(TOKEN_CSV_ID.to_string())
            .chain((0..k.len()).map(|l| format!("tok_{l}")))
            .collect();
        if cols != expected_cols {
            return Err(TokenError::BadCsv {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut table = TokenTable {
            items: Vec::new(),
            k,
            tokens: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let bad = |message: String| TokenError::BadCsv { line: i + 2, message };
            let mut fields = line.split(',');
            let item = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| bad("missing item id".into()))?;
            let toks: Vec<u32> = fields
                .map(|f| f.parse::<u32>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_, _>>()?;
            if toks.len() != table.k.len() {
                return Err(bad(format!("expected {} tokens", table.k.len())));
            }
            if let Some((l, t)) = toks.iter().enumerate().find(|(l, &t)| t as usize >= table.k[*l]) {
                return Err(bad(format!("token {t} out of range for layer {l}")));
            }
            table.items.push(item.to_owned());
            table.tokens.push(toks);
        }
        Ok(table)
    }
}

fn layer_points(embeddings: &LayeredEmbeddings, layer: usize, rows: &[usize]) -> Points {
    let data = rows
        .iter()
        .flat_map(|&r| embeddings.layer(r, layer).iter().map(|&v| f64::from(v)))
        .collect();
    Points {
        dim: embeddings.audio_dim(),
        data,
    }
}

fn standardize(points: &mut Points) -> (Vec<f64>, Vec<f64>) {
    let (n, dim) = (points.len() as f64, points.dim);
    let mut mean = vec![0.0; dim];
    for i in 0..points.len() {
        for (m, v) in mean.iter_mut().zip(points.row(i)) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for i in 0..points.len() {
        for ((s, v), m) in var.iter_mut().zip(points.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    for row in points.data.chunks_exact_mut(dim) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
            *v = (*v - m) / s;
        }
    }
    (mean, std)
}

/// Fits one codebook per layer on `fit_rows` (all rows when `None`), then
/// tokenizes every item. Layer `l` is seeded from stream `l` of `seed`.
pub fn tokenize_rows(
    embeddings: &LayeredEmbeddings,
    k: usize,
    seed: u64,
    fit_rows: Option<&[usize]>,
    opts: &KMeansOptions,
    z_score: bool,
) -> Result<(TokenCodebooks, TokenTable), TokenError> {
    if embeddings.is_empty() {
        return Err(TokenError::EmptyEmbeddings);
    }
    let all: Vec<usize> = (0..embeddings.len()).collect();
    let rows = fit_rows.unwrap_or(&all);
    let codebooks: Vec<Codebook> = (0..embeddings.n_layers())
        .into_par_iter()
        .map(|layer| {
            let mut points = layer_points(embeddings, layer, rows);
            let scaling = z_score.then(|| standardize(&mut points));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(layer as u64);
            let layer_seed = rng.next_u64();
            let fit = fit_kmeans(&points, k, layer_seed, opts)?;
            Ok(Codebook {
                layer,
                k,
                dim: points.dim,
                centroids: fit.centroids,
                inertia: fit.inertia,
                seed: layer_seed,
                standardize: scaling,
            })
        })
        .collect::<Result<_, TokenError>>()?;
    let books = TokenCodebooks { codebooks };
    let table = books.assign(embeddings)?;
    Ok((books, table))
}

/// [`tokenize_rows`] over all items with default options.
pub fn tokenize(embeddings: &LayeredEmbeddings, k: usize, seed: u64) -> Result<(TokenCodebooks, TokenTable), TokenError> {
    tokenize_rows(embeddings, k, seed, None, &KMeansOptions::default(), false)
}
