//! Synthetic datasets with planted audio-cluster taste structure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    write_interactions, write_metadata, DataError, EntityKind, EventLog, InteractionEvent, KeyMap, LayeredEmbeddings,
    MetaRecord, MetadataTable, DEFAULT_CORE,
};

/// 2023-01-01T00:00:00Z
pub const YEAR_START: i64 = 1_672_531_200;
const YEAR_SECONDS: i64 = 365 * 24 * 3600;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How user preferences over clusters are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityMode {
    /// Each user likes `liked_clusters` clusters equally.
    #[default]
    Planted,
    /// Every cluster gets weight `1/C`; positives carry no cluster signal.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_layers: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    pub n_clusters: usize,
    /// Distance scale of the per-layer cluster centroids.
    pub cluster_separation: f64,
    /// Standard deviation of the Gaussian noise around each centroid.
    pub noise: f64,
    /// Mean number of listening events per user.
    pub events_per_user: f64,
    pub cold_fraction: f64,
    pub seed: u64,
    pub affinity: AffinityMode,
    pub liked_clusters: usize,
    /// Repeat-listen probability for pairs in a liked cluster.
    pub p_like: f64,
    /// Repeat-listen probability elsewhere.
    pub p_base: f64,
    /// Fraction of items relabelled at random from one layer to the next.
    pub layer_drift: f64,
    pub zipf_exponent: f64,
    /// Every item gets at least this many distinct listeners.
    pub min_item_users: usize,
    /// Clusters per coarse genre group visible through text and metadata.
    pub genre_group_size: usize,
    pub text_noise: f64,
    /// Fraction of items whose text vector is all zeros.
    pub text_missing: f64,
    /// Logit shift from `+β` on the most popular item to `−β` on the least
    /// popular one; 0 leaves labels independent of popularity.
    pub popularity_bias: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 2000,
            n_layers: 4,
            audio_dim: 32,
            text_dim: 16,
            n_clusters: 16,
            cluster_separation: 10.0,
            noise: 1.0,
            events_per_user: 300.0,
            cold_fraction: 0.2,
            seed: 0,
            affinity: AffinityMode::Planted,
            liked_clusters: 4,
            p_like: 0.75,
            p_base: 0.15,
            layer_drift: 0.1,
            zipf_exponent: 1.0,
            min_item_users: DEFAULT_CORE + 1,
            genre_group_size: 4,
            text_noise: 0.1,
            text_missing: 0.1,
            popularity_bias: 0.0,
        }
    }
}

impl SynthConfig {
    /// Steeper Zipf curve with labels that favour popular items, the regime
    /// where ID-only models concentrate on the head.
    pub fn long_tail() -> Self {
        Self {
            zipf_exponent: 1.2,
            popularity_bias: 1.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_users == 0 || self.n_items == 0 {
            return bad("n_users and n_items must be >= 1".into());
        }
        if self.n_layers == 0 || self.audio_dim == 0 {
            return bad("n_layers and audio_dim must be >= 1".into());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_items {
            return bad(format!("n_clusters must lie in 1..={}", self.n_items));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return bad("cluster_separation must be > 0".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be >= 0".into());
        }
        if !(self.events_per_user > 0.0 && self.events_per_user.is_finite()) {
            return bad("events_per_user must be > 0".into());
        }
        if !(self.cold_fraction > 0.0 && self.cold_fraction < 1.0) {
            return bad("cold_fraction must lie in (0, 1)".into());
        }
        if self.liked_clusters == 0 || self.liked_clusters > self.n_clusters {
            return bad(format!("liked_clusters must lie in 1..={}", self.n_clusters));
        }
        for (name, p) in [("p_like", self.p_like), ("p_base", self.p_base)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, p) in [("layer_drift", self.layer_drift), ("text_missing", self.text_missing)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be >= 0".into());
        }
        if self.min_item_users > self.n_users {
            return bad("min_item_users exceeds n_users".into());
        }
        if self.genre_group_size == 0 {
            return bad("genre_group_size must be >= 1".into());
        }
        if !(self.text_noise >= 0.0 && self.text_noise.is_finite()) {
            return bad("text_noise must be >= 0".into());
        }
        if !self.popularity_bias.is_finite() {
            return bad("popularity_bias must be finite".into());
        }
        Ok(())
    }

    fn n_groups(&self) -> usize {
        self.n_clusters.div_ceil(self.genre_group_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthPair {
    pub user: String,
    pub item: String,
    pub probability: f64,
}

/// Planted structure behind a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_clusters: usize,
    pub n_layers: usize,
    pub liked_clusters: usize,
    pub p_like: f64,
    pub p_base: f64,
    #[serde(default)]
    pub popularity_bias: f64,
    pub items: Vec<String>,
    /// `item_clusters[i][l]`: planted cluster of item `i` in layer `l`.
    pub item_clusters: Vec<Vec<u32>>,
    /// Popularity rank of each item (0 = most popular).
    pub popularity_rank: Vec<usize>,
    pub users: Vec<String>,
    /// Weights over clusters summing to one.
    pub user_affinity: Vec<Vec<f64>>,
    /// Positive probability of every observed pair.
    pub pairs: Vec<TruthPair>,
}

impl GroundTruth {
    /// `p_base + (p_like − p_base)·min(1, m·a_u[c₀(i)])`, shifted on the
    /// logit scale by `β·(1 − 2r/(n−1))` for popularity rank `r`.
    pub fn probability(&self, user: usize, item: usize) -> f64 {
        let c = self.item_clusters[item][0] as usize;
        let a = self.user_affinity[user][c];
        let p = self.p_base + (self.p_like - self.p_base) * (self.liked_clusters as f64 * a).min(1.0);
        if self.popularity_bias == 0.0 || p <= 0.0 || p >= 1.0 {
            return p;
        }
        let n = self.items.len();
        let centred = if n > 1 {
            1.0 - 2.0 * self.popularity_rank[item] as f64 / (n - 1) as f64
        } else {
            0.0
        };
        let logit = (p / (1.0 - p)).ln() + self.popularity_bias * centred;
        1.0 / (1.0 + (-logit).exp())
    }

    /// Planted labels of one layer in item order.
    pub fn layer_labels(&self, layer: usize) -> Vec<u32> {
        self.item_clusters.iter().map(|c| c[layer]).collect()
    }

    /// Key → index maps for users and items.
    pub fn index(&self) -> (HashMap<&str, usize>, HashMap<&str, usize>) {
        (
            self.users.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect(),
            self.items.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<(), SynthError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let bytes = fs::read(path).map_err(|e| DataError::file(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Everything [`generate`] produces, in memory.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub config: SynthConfig,
    pub events: EventLog,
    pub user_meta: MetadataTable,
    pub item_meta: MetadataTable,
    pub embeddings: LayeredEmbeddings,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPaths {
    pub events: PathBuf,
    pub users: PathBuf,
    pub items: PathBuf,
    pub embeddings: PathBuf,
    pub ground_truth: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            events: dir.join("events.tsv"),
            users: dir.join("users.jsonl"),
            items: dir.join("items.jsonl"),
            embeddings: dir.join("embeddings.temb"),
            ground_truth: dir.join("ground_truth.json"),
        }
    }
}

impl SynthData {
    pub fn write(&self, dir: &Path) -> Result<SynthPaths, SynthError> {
        fs::create_dir_all(dir)?;
        let paths = SynthPaths::in_dir(dir);
        write_interactions(&paths.events, &self.events)?;
        write_metadata(&paths.users, &self.user_meta)?;
        write_metadata(&paths.items, &self.item_meta)?;
        self.embeddings.write(&paths.embeddings)?;
        self.truth.write(&paths.ground_truth)?;
        Ok(paths)
    }
}

/// `count` orthogonal directions scaled by `scale` when they fit in `dim`
/// dimensions, random unit directions otherwise.
fn centroids<R: Rng>(count: usize, dim: usize, scale: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if out.len() < dim {
            for u in &out {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    for v in &mut out {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    out
}

const COUNTRIES: [&str; 6] = ["se", "us", "de", "jp", "br", "kr"];
const TAGS: [&str; 10] = [
    "chill", "party", "focus", "workout", "sad", "happy", "live", "acoustic", "remix", "classic",
];

/// Draws a dataset from `cfg`; a pure function of the config.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_users = cfg.n_users;
    let n_items = cfg.n_items;
    let c = cfg.n_clusters;
    let item_keys: Vec<String> = (0..n_items).map(|i| format!("t{i:05}")).collect();
    let user_keys: Vec<String> = (0..n_users).map(|u| format!("u{u:04}")).collect();

    // popularity ranks are a random permutation of items; layer-0 clusters
    // are dealt out in blocks of C ranks so each cluster gets an equal share
    // of the popularity mass
    let mut by_rank: Vec<usize> = (0..n_items).collect();
    by_rank.shuffle(&mut rng);
    let mut popularity_rank = vec![0usize; n_items];
    for (r, &i) in by_rank.iter().enumerate() {
        popularity_rank[i] = r;
    }
    let mut layer0 = vec![0u32; n_items];
    for block in by_rank.chunks(c) {
        let mut labels: Vec<u32> = (0..c as u32).collect();
        labels.shuffle(&mut rng);
        for (&i, &l) in block.iter().zip(&labels) {
            layer0[i] = l;
        }
    }
    let mut item_clusters: Vec<Vec<u32>> = layer0.iter().map(|&l| vec![l]).collect();
    for _ in 1..cfg.n_layers {
        for labels in item_clusters.iter_mut() {
            let prev = *labels.last().expect("layer 0 present");
            let next = if rng.random_bool(cfg.layer_drift) {
                rng.random_range(0..c as u32)
            } else {
                prev
            };
            labels.push(next);
        }
    }

    let user_affinity: Vec<Vec<f64>> = (0..n_users)
        .map(|_| match cfg.affinity {
            AffinityMode::Uniform => vec![1.0 / c as f64; c],
            AffinityMode::Planted => {
                let mut a = vec![0.0; c];
                for k in index::sample(&mut rng, c, cfg.liked_clusters) {
                    a[k] = 1.0 / cfg.liked_clusters as f64;
                }
                a
            }
        })
        .collect();

    let mut truth = GroundTruth {
        n_clusters: c,
        n_layers: cfg.n_layers,
        liked_clusters: cfg.liked_clusters,
        p_like: cfg.p_like,
        p_base: cfg.p_base,
        popularity_bias: cfg.popularity_bias,
        items: item_keys.clone(),
        item_clusters,
        popularity_rank,
        users: user_keys.clone(),
        user_affinity,
        pairs: Vec::new(),
    };

    // embeddings: per-layer centroids plus isotropic noise
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let layer_centroids: Vec<Vec<Vec<f64>>> = (0..cfg.n_layers)
        .map(|_| centroids(c, cfg.audio_dim, cfg.cluster_separation, &mut rng))
        .collect();
    let mut audio = Vec::with_capacity(n_items * cfg.n_layers * cfg.audio_dim);
    for labels in &truth.item_clusters {
        for (l, &k) in labels.iter().enumerate() {
            for &x in &layer_centroids[l][k as usize] {
                audio.push((x + noise.sample(&mut rng)) as f32);
            }
        }
    }
    let n_groups = cfg.n_groups();
    let text_noise = Normal::new(0.0, cfg.text_noise).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let mut text = Vec::with_capacity(n_items * cfg.text_dim);
    for labels in &truth.item_clusters {
        let group = labels[0] as usize / cfg.genre_group_size;
        let missing = rng.random_bool(cfg.text_missing);
        for d in 0..cfg.text_dim {
            let v = if missing {
                0.0
            } else {
                let hot = if d % n_groups == group { 1.0 } else { 0.0 };
                hot + text_noise.sample(&mut rng)
            };
            text.push(v as f32);
        }
    }
    let items_map = KeyMap::from_keys(item_keys.clone())?;
    let embeddings = LayeredEmbeddings::new(items_map.clone(), cfg.n_layers, cfg.audio_dim, cfg.text_dim, audio, text)?;

    // which items each user listens to: a coverage pass, then Zipf picks
    let mut chosen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_users];
    for i in 0..n_items {
        for u in index::sample(&mut rng, n_users, cfg.min_item_users) {
            chosen[u].insert(i);
        }
    }
    let weights: Vec<f64> = truth
        .popularity_rank
        .iter()
        .map(|&r| (r as f64 + 1.0).powf(-cfg.zipf_exponent))
        .collect();
    let repeat_extra = 0.7;
    let mean_rate = match cfg.affinity {
        AffinityMode::Planted => {
            let q = cfg.liked_clusters as f64 / c as f64;
            q * cfg.p_like + (1.0 - q) * cfg.p_base
        }
        AffinityMode::Uniform => {
            cfg.p_base + (cfg.p_like - cfg.p_base) * (cfg.liked_clusters as f64 / c as f64).min(1.0)
        }
    };
    let mean_count = (1.0 - mean_rate) + mean_rate * (2.0 + repeat_extra);
    let pair_mean = (cfg.events_per_user / mean_count).max(1.0);
    let pair_dist = Poisson::new(pair_mean).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let extra_dist = Poisson::new(repeat_extra).expect("positive mean");
    for set in chosen.iter_mut() {
        let target = (pair_dist.sample(&mut rng) as usize).clamp(DEFAULT_CORE, n_items);
        if set.len() >= target {
            continue;
        }
        let need = target - set.len();
        let amount = (need + set.len()).min(n_items);
        let picks = index::sample_weighted(&mut rng, n_items, |i| weights[i], amount)
            .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        let mut picks: Vec<usize> = picks.into_iter().filter(|i| !set.contains(i)).collect();
        picks.sort_unstable();
        picks.shuffle(&mut rng);
        set.extend(picks.into_iter().take(need));
    }

    let mut events = Vec::new();
    for (u, set) in chosen.iter().enumerate() {
        for &i in set {
            let p = truth.probability(u, i);
            let count = if rng.random_bool(p) {
                2 + extra_dist.sample(&mut rng) as usize
            } else {
                1
            };
            for _ in 0..count {
                events.push(InteractionEvent {
                    user: u as u32,
                    item: i as u32,
                    timestamp: YEAR_START + rng.random_range(0..YEAR_SECONDS),
                });
            }
            truth.pairs.push(TruthPair {
                user: user_keys[u].clone(),
                item: item_keys[i].clone(),
                probability: p,
            });
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.user, e.item));
    let log = EventLog {
        events,
        users: KeyMap::from_keys(user_keys.clone())?,
        items: items_map,
    };

    let mut user_meta = MetadataTable::new(EntityKind::User);
    for key in &user_keys {
        let mut rec = MetaRecord::default();
        rec.categorical
            .insert("country".into(), COUNTRIES[rng.random_range(0..COUNTRIES.len())].into());
        rec.numeric.insert("age".into(), rng.random_range(16..70) as f64);
        user_meta.rows.insert(key.clone(), rec);
    }
    let mut item_meta = MetadataTable::new(EntityKind::Item);
    let n_artists = (n_items / 8).max(1);
    for (i, key) in item_keys.iter().enumerate() {
        let mut rec = MetaRecord::default();
        let group = truth.item_clusters[i][0] as usize / cfg.genre_group_size;
        let genre = if rng.random_bool(0.5) { group } else { rng.random_range(0..n_groups) };
        rec.categorical.insert("genre".into(), format!("g{genre}"));
        rec.categorical
            .insert("artist".into(), format!("a{}", rng.random_range(0..n_artists)));
        let n_tags = rng.random_range(1..=3);
        let tags: BTreeSet<&str> = index::sample(&mut rng, TAGS.len(), n_tags).into_iter().map(|t| TAGS[t]).collect();
        rec.multi.insert("tags".into(), tags.into_iter().map(String::from).collect());
        rec.numeric.insert("duration".into(), rng.random_range(120.0..360.0f64).round());
        rec.numeric.insert("year".into(), rng.random_range(1960..2024) as f64);
        item_meta.rows.insert(key.clone(), rec);
    }

    Ok(SynthData {
        config: cfg.clone(),
        events: log,
        user_meta,
        item_meta,
        embeddings,
        truth,
    })
}

/// Empirical positive rate and mean planted probability per layer-0 cluster
/// over the observed pairs: `(rate, expected, pairs)`.
pub fn cluster_positive_rates(data: &SynthData) -> BTreeMap<u32, (f64, f64, usize)> {
    let (users, items) = data.truth.index();
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for e in &data.events.events {
        *counts.entry((e.user, e.item)).or_default() += 1;
    }
    let mut acc: BTreeMap<u32, (usize, f64, usize)> = BTreeMap::new();
    for (&(u, i), &n) in &counts {
        let ui = users[data.events.users.key(u)];
        let ii = items[data.events.items.key(i)];
        let cl = data.truth.item_clusters[ii][0];
        let e = acc.entry(cl).or_default();
        e.0 += usize::from(n >= 2);
        e.1 += data.truth.probability(ui, ii);
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(k, (pos, p, n))| (k, (pos as f64 / n as f64, p / n as f64, n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::muqtoken::adjusted_rand_index;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 60,
            n_items: 120,
            n_layers: 4,
            audio_dim: 8,
            text_dim: 4,
            n_clusters: 6,
            events_per_user: 40.0,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_pure() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.embeddings, b.embeddings);
    }

    #[test]
    fn affinities_are_weights() {
        let d = generate(&small()).unwrap();
        for a in &d.truth.user_affinity {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(a.iter().all(|&w| w >= 0.0));
        }
        assert!(d.truth.item_clusters.iter().flatten().all(|&c| (c as usize) < 6));
    }

    #[test]
    fn clusters_are_balanced_over_popularity() {
        let d = generate(&small()).unwrap();
        let mut per_cluster = vec![0usize; 6];
        for c in d.truth.layer_labels(0) {
            per_cluster[c as usize] += 1;
        }
        assert!(per_cluster.iter().all(|&n| n == 20));
    }

    #[test]
    fn every_item_survives_five_core() {
        let d = generate(&small()).unwrap();
        let mut listeners: HashMap<u32, BTreeSet<u32>> = HashMap::new();
        for e in &d.events.events {
            listeners.entry(e.item).or_default().insert(e.user);
        }
        assert_eq!(listeners.len(), 120);
        assert!(listeners.values().all(|s| s.len() > DEFAULT_CORE));
    }

    #[test]
    fn deeper_layers_drift_away() {
        let d = generate(&small()).unwrap();
        let l0 = d.truth.layer_labels(0);
        let near = adjusted_rand_index(&l0, &d.truth.layer_labels(1)).unwrap();
        let far = adjusted_rand_index(&l0, &d.truth.layer_labels(3)).unwrap();
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small();
        c.n_clusters = 500;
        assert!(generate(&c).is_err());
        let mut c = small();
        c.cluster_separation = 0.0;
        assert!(generate(&c).is_err());
    }
}
