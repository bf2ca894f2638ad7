use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TokenError;

/// Row-major `n × dim` point matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, TokenError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(TokenError::Dimension {
                expected: dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TokenError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(TokenError::Dimension {
                expected: dim,
                actual: r.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once `‖ΔC‖ / ‖C‖` (Frobenius) falls below this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            n_init: 4,
        }
    }
}

/// One layer's centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub layer: usize,
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    /// Per-dimension `(mean, std)` applied before distance computations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<(Vec<f64>, Vec<f64>)>,
}

impl Codebook {
    fn prepare<'a>(&self, x: &'a [f64], buf: &'a mut Vec<f64>) -> &'a [f64] {
        match &self.standardize {
            None => x,
            Some((mean, std)) => {
                buf.clear();
                buf.extend(x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s));
                buf
            }
        }
    }

    /// Nearest centroid id, lowest index on ties.
    pub fn assign(&self, x: &[f64]) -> u32 {
        let mut buf = Vec::new();
        let x = self.prepare(x, &mut buf);
        nearest(self.centroids.iter().map(Vec::as_slice), x).0 as u32
    }
}

/// Result of one [`fit_kmeans`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest<'a, I: Iterator<Item = &'a [f64]>>(centroids: I, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cent) in centroids.enumerate() {
        let d = sq_dist(cent, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Labels and squared distances of every point, parallel over points.
pub fn assign_nearest(points: &Points, centroids: &[Vec<f64>]) -> Vec<(u32, f64)> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let (c, d) = nearest(centroids.iter().map(Vec::as_slice), points.row(i));
            (c as u32, d)
        })
        .collect()
}

fn sample_d2(d2: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let n = d2.len();
    if total <= 0.0 {
        return rng.random_range(0..n);
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &d) in d2.iter().enumerate() {
        acc += d;
        if acc > target {
            return i;
        }
    }
    n - 1
}

/// Greedy k-means++: each step draws `2 + ln k` D²-weighted candidates and
/// keeps the one that lowers the total potential most.
fn kmeans_pp(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = sample_d2(&d2, total, rng);
            let c = points.row(pick);
            let cand: Vec<f64> = d2.iter().enumerate().map(|(i, &d)| d.min(sq_dist(points.row(i), c))).collect();
            let pot: f64 = cand.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, pick, cand));
            }
        }
        let (_, pick, cand) = best.expect("trials >= 1");
        d2 = cand;
        centroids.push(points.row(pick).to_vec());
    }
    centroids
}

fn lloyd(points: &Points, mut centroids: Vec<Vec<f64>>, opts: &KMeansOptions) -> KMeansFit {
    let (n, dim, k) = (points.len(), points.dim, centroids.len());
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut assigned = assign_nearest(points, &centroids);
    loop {
        history.push(assigned.iter().map(|a| a.1).sum());
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, v) in sums[c as usize].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &m), old)| {
                if m == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / m as f64).collect()
                }
            })
            .collect();
        // empty clusters move to the points currently worst served
        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)));
            if let Some(i) = far {
                taken[i] = true;
                next[c] = points.row(i).to_vec();
            }
        }
        let shift: f64 = next.iter().zip(&centroids).map(|(a, b)| sq_dist(a, b)).sum();
        let norm: f64 = centroids.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum();
        centroids = next;
        assigned = assign_nearest(points, &centroids);
        if shift.sqrt() <= opts.tol * norm.sqrt().max(1e-12) {
            history.push(assigned.iter().map(|a| a.1).sum());
            break;
        }
    }
    let inertia = *history.last().expect("at least one assignment");
    KMeansFit {
        centroids,
        labels: assigned.iter().map(|a| a.0).collect(),
        inertia,
        history,
        iterations,
    }
}

/// Lloyd's algorithm from k-means++ seeds, best of `n_init` restarts.
pub fn fit_kmeans(points: &Points, k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansFit, TokenError> {
    if k == 0 {
        return Err(TokenError::ZeroClusters);
    }
    if points.len() < k {
        return Err(TokenError::TooFewPoints { n: points.len(), k });
    }
    if points.data.iter().any(|v| !v.is_finite()) {
        return Err(TokenError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..opts.n_init.max(1) {
        let init = kmeans_pp(points, k, &mut rng);
        let fit = lloyd(points, init, opts);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("n_init >= 1"))
}
