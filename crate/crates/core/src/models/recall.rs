use std::cmp::Ordering;
use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::add_row_penalty;
use super::{ModelError, ModelHyper};
use crate::dataio::{KeyMap, LayeredEmbeddings};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallKind {
    Bpr,
    Vbpr,
}

impl RecallKind {
    pub fn name(self) -> &'static str {
        match self {
            RecallKind::Bpr => "bpr",
            RecallKind::Vbpr => "vbpr",
        }
    }
}

/// Which audio representation feeds the VBPR content vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VbprInput {
    #[default]
    MeanPooled,
    AllLayers,
}

/// Content matrix `(n_items, d_f)`: audio (mean over layers or all layers
/// flattened) followed by text.
pub fn modal_features(items: &KeyMap, emb: &LayeredEmbeddings, input: VbprInput) -> Result<Tensor, ModelError> {
    let audio_w = match input {
        VbprInput::MeanPooled => emb.audio_dim(),
        VbprInput::AllLayers => emb.audio_dim() * emb.n_layers(),
    };
    let width = audio_w + emb.text_dim();
    let mut data = Vec::with_capacity(items.len() * width);
    for i in 0..items.len() as u32 {
        let row = emb.row_of(items.key(i)).ok_or(ModelError::MissingModality(i))?;
        match input {
            VbprInput::MeanPooled => data.extend(emb.mean_audio(row)),
            VbprInput::AllLayers => data.extend(emb.audio_row(row).iter().map(|&v| v as f64)),
        }
        data.extend(emb.text(row).iter().map(|&v| v as f64));
    }
    Ok(Tensor::new(vec![items.len(), width], data)?)
}

/// Triples `(u, i⁺, j⁻)` for the pairwise loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecallBatch {
    pub users: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl RecallBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ModalParams {
    theta: ParamId,
    e: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallNet {
    pub kind: RecallKind,
    pub hyper: ModelHyper,
    pub n_users: usize,
    pub n_items: usize,
    /// VBPR content matrix `(n_items, d_f)`; not trained.
    pub features: Option<Tensor>,
    user: ParamId,
    item: ParamId,
    bias: ParamId,
    modal: Option<ModalParams>,
}

impl RecallNet {
    pub fn build(
        kind: RecallKind,
        n_users: usize,
        n_items: usize,
        features: Option<Tensor>,
        hyper: ModelHyper,
        store: &mut ParamStore,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = hyper.embed_dim;
        let std = hyper.init_std;
        let user = store.add_normal("user", vec![n_users, d], std, &mut rng);
        let item = store.add_normal("item", vec![n_items, d], std, &mut rng);
        let bias = store.zeros("item_bias", vec![n_items, 1]);
        let (modal, features) = match kind {
            RecallKind::Bpr => (None, None),
            RecallKind::Vbpr => {
                let f = features.ok_or(ModelError::MissingModality(0))?;
                if f.shape().len() != 2 || f.shape()[0] != n_items {
                    return Err(ModelError::SchemaError(format!(
                        "content matrix {:?} does not cover {n_items} items",
                        f.shape()
                    )));
                }
                let df = f.shape()[1];
                let dv = d;
                let theta = store.add_normal("theta", vec![n_users, dv], std, &mut rng);
                let e = store.add_normal("modal_proj", vec![df, dv], std, &mut rng);
                let beta = store.zeros("modal_bias", vec![df, 1]);
                (Some(ModalParams { theta, e, beta }), Some(f))
            }
        };
        Ok(Self {
            kind,
            hyper,
            n_users,
            n_items,
            features,
            user,
            item,
            bias,
            modal,
        })
    }

    fn check(&self, batch: &RecallBatch) -> Result<(), ModelError> {
        if let Some(&u) = batch.users.iter().find(|&&u| u >= self.n_users) {
            return Err(ModelError::OutOfRange(format!("user {u} >= {}", self.n_users)));
        }
        if let Some(&i) = batch.pos.iter().chain(&batch.neg).find(|&&i| i >= self.n_items) {
            return Err(ModelError::OutOfRange(format!("item {i} >= {}", self.n_items)));
        }
        if batch.pos.len() != batch.users.len() || batch.neg.len() != batch.users.len() {
            return Err(ModelError::SchemaError("ragged recall batch".into()));
        }
        Ok(())
    }

    /// `(n, 1)` scores of `users[r]` for `items[r]`, plus gathered rows.
    fn scores(&self, tape: &mut Tape<'_>, gu: Var, theta_u: Option<Var>, items: &[usize]) -> Result<(Var, Vec<Var>), ModelError> {
        let n = items.len();
        let gi = tape.gather(self.item, items)?;
        let bi = tape.gather(self.bias, items)?;
        let dot = tape.mul(gu, gi)?;
        let dot = tape.sum_axis(dot, 1)?;
        let dot = tape.reshape(dot, vec![n, 1])?;
        let mut score = tape.add(dot, bi)?;
        if let (Some(m), Some(theta_u)) = (&self.modal, theta_u) {
            let f = self.features.as_ref().expect("vbpr carries features");
            let df = f.shape()[1];
            let mut rows = Vec::with_capacity(n * df);
            for &i in items {
                rows.extend_from_slice(&f.data()[i * df..(i + 1) * df]);
            }
            let fv = tape.constant(Tensor::new(vec![n, df], rows)?)?;
            let e = tape.param(m.e)?;
            let proj = tape.matmul(fv, e)?;
            let vis = tape.mul(theta_u, proj)?;
            let vis = tape.sum_axis(vis, 1)?;
            let vis = tape.reshape(vis, vec![n, 1])?;
            let beta = tape.param(m.beta)?;
            let fb = tape.matmul(fv, beta)?;
            score = tape.add(score, vis)?;
            score = tape.add(score, fb)?;
        }
        Ok((score, vec![gi, bi]))
    }

    /// Mean `−ln σ(x_ui − x_uj)` plus L2 on gathered rows.
    pub fn loss(&self, tape: &mut Tape<'_>, batch: &RecallBatch) -> Result<Var, ModelError> {
        self.loss_scaled(tape, batch, batch.len())
    }

    /// Shard contribution to the loss of a batch with `total` triples.
    pub fn loss_scaled(&self, tape: &mut Tape<'_>, batch: &RecallBatch, total: usize) -> Result<Var, ModelError> {
        self.check(batch)?;
        let n = batch.len();
        let gu = tape.gather(self.user, &batch.users)?;
        let theta_u = match &self.modal {
            Some(m) => Some(tape.gather(m.theta, &batch.users)?),
            None => None,
        };
        let (xi, mut rows) = self.scores(tape, gu, theta_u, &batch.pos)?;
        let (xj, rows_j) = self.scores(tape, gu, theta_u, &batch.neg)?;
        rows.extend(rows_j);
        rows.push(gu);
        rows.extend(theta_u);
        let diff = tape.sub(xi, xj)?;
        let diff = tape.reshape(diff, vec![n])?;
        let bce = tape.bce_with_logits(diff, &vec![1.0; n])?;
        let sum = tape.sum(bce)?;
        let mean = tape.scale(sum, 1.0 / total as f64)?;
        Ok(add_row_penalty(tape, mean, &rows, self.hyper.l2, total)?)
    }
}

/// Precomputed item side for scoring every item against a user.
#[derive(Clone, Debug)]
pub struct ItemScorer {
    width: usize,
    item_vecs: Vec<f64>,
    item_terms: Vec<f64>,
}

/// BPR or VBPR model with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct RecallModel {
    pub net: RecallNet,
    pub params: ParamStore,
}

impl RecallModel {
    pub fn new(
        kind: RecallKind,
        n_users: usize,
        n_items: usize,
        features: Option<Tensor>,
        hyper: ModelHyper,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut params = ParamStore::new();
        let net = RecallNet::build(kind, n_users, n_items, features, hyper, &mut params, seed)?;
        Ok(Self { net, params })
    }

    pub fn kind(&self) -> RecallKind {
        self.net.kind
    }

    pub fn n_items(&self) -> usize {
        self.net.n_items
    }

    pub fn n_users(&self) -> usize {
        self.net.n_users
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }

    fn row(&self, id: ParamId, r: usize) -> &[f64] {
        let t = self.params.get(id);
        let w = t.shape()[1];
        &t.data()[r * w..(r + 1) * w]
    }

    /// `x_ui`. Under VBPR `modal` overrides the stored content row.
    pub fn recall_score(&self, user: usize, item: usize, modal: Option<&[f64]>) -> Result<f64, ModelError> {
        if user >= self.net.n_users {
            return Err(ModelError::OutOfRange(format!("user {user}")));
        }
        if item >= self.net.n_items {
            return Err(ModelError::OutOfRange(format!("item {item}")));
        }
        let gu = self.row(self.net.user, user);
        let gi = self.row(self.net.item, item);
        let mut s = self.row(self.net.bias, item)[0] + dot(gu, gi);
        if let Some(m) = &self.net.modal {
            let f = match modal {
                Some(f) => f,
                None => {
                    let feats = self.net.features.as_ref().ok_or(ModelError::MissingModality(item as u32))?;
                    let df = feats.shape()[1];
                    &feats.data()[item * df..(item + 1) * df]
                }
            };
            let e = self.params.get(m.e);
            let beta = self.params.get(m.beta);
            if f.len() != e.shape()[0] {
                return Err(ModelError::SchemaError(format!(
                    "modal vector has {} dims, expected {}",
                    f.len(),
                    e.shape()[0]
                )));
            }
            let theta = self.row(m.theta, user);
            let proj = project(f, e.data(), e.shape()[1]);
            s += dot(theta, &proj) + dot(f, beta.data());
        }
        Ok(s)
    }

    pub fn item_scorer(&self) -> ItemScorer {
        let d = self.net.hyper.embed_dim;
        let n = self.net.n_items;
        let dv = self.net.modal.as_ref().map_or(0, |m| self.params.get(m.e).shape()[1]);
        let width = d + dv;
        let mut item_vecs = Vec::with_capacity(n * width);
        let mut item_terms = Vec::with_capacity(n);
        for i in 0..n {
            item_vecs.extend_from_slice(self.row(self.net.item, i));
            let mut term = self.row(self.net.bias, i)[0];
            if let (Some(m), Some(feats)) = (&self.net.modal, &self.net.features) {
                let df = feats.shape()[1];
                let f = &feats.data()[i * df..(i + 1) * df];
                let e = self.params.get(m.e);
                item_vecs.extend(project(f, e.data(), dv));
                term += dot(f, self.params.get(m.beta).data());
            }
            item_terms.push(term);
        }
        ItemScorer {
            width,
            item_vecs,
            item_terms,
        }
    }

    /// Scores of `user` against every item.
    pub fn score_all(&self, scorer: &ItemScorer, user: usize) -> Vec<f64> {
        let mut uvec = self.row(self.net.user, user).to_vec();
        if let Some(m) = &self.net.modal {
            uvec.extend_from_slice(self.row(m.theta, user));
        }
        scorer
            .item_terms
            .iter()
            .enumerate()
            .map(|(i, &t)| t + dot(&uvec, &scorer.item_vecs[i * scorer.width..(i + 1) * scorer.width]))
            .collect()
    }

    /// Top-`k` unseen items for `user`.
    pub fn rank_user(&self, scorer: &ItemScorer, user: usize, exclude: &HashSet<u32>, k: usize) -> RankedList {
        rank_items(&self.score_all(scorer, user), exclude, k)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `fᵀE` for row-major `E` of width `dv`.
fn project(f: &[f64], e: &[f64], dv: usize) -> Vec<f64> {
    let mut out = vec![0.0; dv];
    for (r, &x) in f.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&e[r * dv..(r + 1) * dv]) {
            *o += x * w;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<u32>,
    /// Fewer than `k` candidates remained.
    pub short: bool,
}

/// Top-`k` by descending score, ties by ascending index, skipping `exclude`.
pub fn rank_items(scores: &[f64], exclude: &HashSet<u32>, k: usize) -> RankedList {
    let mut cand: Vec<u32> = (0..scores.len() as u32).filter(|i| !exclude.contains(i)).collect();
    let short = cand.len() < k;
    let by_score = |a: &u32, b: &u32| {
        scores[*b as usize]
            .partial_cmp(&scores[*a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    if cand.len() > k && k > 0 {
        cand.select_nth_unstable_by(k - 1, by_score);
        cand.truncate(k);
    }
    cand.sort_by(by_score);
    cand.truncate(k);
    RankedList { items: cand, short }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(m: &mut RecallModel, name: &str, data: &[f64]) {
        let id = m.param_id(name).unwrap();
        m.params.get_mut(id).data_mut().copy_from_slice(data);
    }

    fn hyper(d: usize) -> ModelHyper {
        ModelHyper {
            embed_dim: d,
            ..Default::default()
        }
    }

    #[test]
    fn bpr_dot_product() {
        let mut m = RecallModel::new(RecallKind::Bpr, 1, 1, None, hyper(2), 0).unwrap();
        set(&mut m, "user", &[1.0, 1.0]);
        set(&mut m, "item", &[1.0, 1.0]);
        assert_eq!(m.recall_score(0, 0, None).unwrap(), 2.0);
    }

    fn vbpr() -> RecallModel {
        let f = Tensor::new(vec![2, 3], vec![1.0, 0.0, 2.0, -1.0, 0.5, 0.0]).unwrap();
        RecallModel::new(RecallKind::Vbpr, 2, 2, Some(f), hyper(2), 7).unwrap()
    }

    #[test]
    fn vbpr_without_modal_terms_is_bpr() {
        let mut m = vbpr();
        set(&mut m, "modal_proj", &[0.0; 6]);
        set(&mut m, "modal_bias", &[0.0; 3]);
        for u in 0..2 {
            for i in 0..2 {
                let gu = m.row(m.net.user, u).to_vec();
                let gi = m.row(m.net.item, i).to_vec();
                let expect = dot(&gu, &gi) + m.row(m.net.bias, i)[0];
                assert!((m.recall_score(u, i, None).unwrap() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vbpr_without_id_terms_is_content_only() {
        let mut m = vbpr();
        set(&mut m, "user", &[0.0; 4]);
        set(&mut m, "item", &[0.0; 4]);
        set(&mut m, "theta", &[1.0, 2.0, 0.0, 0.0]);
        set(&mut m, "modal_proj", &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        set(&mut m, "modal_bias", &[0.5, 0.0, 0.25]);
        // E·f = (1+2, 0+2) = (3, 2); θ·(E·f) = 3 + 4; β′·f = 0.5 + 0.5
        assert!((m.recall_score(0, 0, None).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn vbpr_requires_features() {
        assert!(matches!(
            RecallModel::new(RecallKind::Vbpr, 1, 1, None, hyper(2), 0),
            Err(ModelError::MissingModality(_))
        ));
    }

    #[test]
    fn score_all_matches_pointwise() {
        let m = vbpr();
        let scorer = m.item_scorer();
        for u in 0..2 {
            let all = m.score_all(&scorer, u);
            for (i, s) in all.iter().enumerate() {
                assert!((s - m.recall_score(u, i, None).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_examples() {
        let none = HashSet::new();
        assert_eq!(rank_items(&[0.9, 0.1, 0.5], &none, 2).items, vec![0, 2]);
        assert_eq!(rank_items(&[1.0; 4], &none, 4).items, vec![0, 1, 2, 3]);
        let all: HashSet<u32> = (0..3).collect();
        let r = rank_items(&[0.9, 0.1, 0.5], &all, 2);
        assert!(r.items.is_empty() && r.short);
        let r = rank_items(&[0.2, 0.3], &none, 5);
        assert_eq!(r.items, vec![1, 0]);
        assert!(r.short);
    }

    #[test]
    fn loss_is_finite_and_differentiable() {
        let m = vbpr();
        let batch = RecallBatch {
            users: vec![0, 1],
            pos: vec![0, 1],
            neg: vec![1, 0],
        };
        let mut tape = Tape::new(&m.params);
        let loss = m.net.loss(&mut tape, &batch).unwrap();
        assert!(tape.value(loss).item().unwrap().is_finite());
        let grads = tape.backward(loss).unwrap();
        assert!(grads.all_finite());
    }
}
