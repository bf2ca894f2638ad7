use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::report::{EarlyStopper, EpochRecord, StopDecision, TrainReport};
use super::{TrainConfig, TrainError, GRAD_SHARD};
use crate::dataio::LabeledPair;
use crate::metrics::{topk_metrics, MetricError, TopK};
use crate::models::{ModelError, RecallBatch, RecallModel};
use crate::tensor::{Gradients, Tape};

/// Items each user interacted with in `pairs`, regardless of label.
pub fn user_histories(pairs: &[LabeledPair], n_users: usize) -> Vec<HashSet<u32>> {
    let mut out = vec![HashSet::new(); n_users];
    for p in pairs {
        out[p.user as usize].insert(p.item);
    }
    out
}

/// Uniform negatives from the items a user has no positive pair with.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    n_items: usize,
    positives: Vec<HashSet<u32>>,
}

impl NegativeSampler {
    pub fn new(train: &[LabeledPair], n_users: usize, n_items: usize) -> Self {
        let mut positives = vec![HashSet::new(); n_users];
        for p in train.iter().filter(|p| p.label) {
            positives[p.user as usize].insert(p.item);
        }
        Self { n_items, positives }
    }

    /// `None` when the user's positives cover every item.
    pub fn sample<R: Rng + ?Sized>(&self, user: u32, rng: &mut R) -> Option<u32> {
        let pos = &self.positives[user as usize];
        if pos.len() >= self.n_items {
            return None;
        }
        loop {
            let j = rng.random_range(0..self.n_items as u32);
            if !pos.contains(&j) {
                return Some(j);
            }
        }
    }

    pub fn positives(&self, user: u32) -> &HashSet<u32> {
        &self.positives[user as usize]
    }
}

/// Held-out positives per user, ranked against all items outside the
/// user's training history.
#[derive(Clone, Debug)]
pub struct RecallEval {
    users: Vec<u32>,
    relevant: Vec<HashSet<u32>>,
    exclude: Vec<HashSet<u32>>,
}

impl RecallEval {
    pub fn new(train: &[LabeledPair], eval: &[LabeledPair], n_users: usize) -> Self {
        let history = user_histories(train, n_users);
        let mut relevant = vec![HashSet::new(); n_users];
        for p in eval.iter().filter(|p| p.label) {
            relevant[p.user as usize].insert(p.item);
        }
        let users: Vec<u32> = (0..n_users as u32).filter(|&u| !relevant[u as usize].is_empty()).collect();
        Self {
            relevant: users.iter().map(|&u| std::mem::take(&mut relevant[u as usize])).collect(),
            exclude: users.iter().map(|&u| history[u as usize].clone()).collect(),
            users,
        }
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Full ranked lists (all non-excluded items) per evaluated user.
    pub fn rankings(&self, model: &RecallModel) -> Vec<Vec<u32>> {
        let scorer = model.item_scorer();
        let n = model.n_items();
        self.users
            .par_iter()
            .zip(&self.exclude)
            .map(|(&u, ex)| model.rank_user(&scorer, u as usize, ex, n).items)
            .collect()
    }

    pub fn topk(&self, model: &RecallModel, ks: &[usize]) -> Result<BTreeMap<usize, TopK>, MetricError> {
        let ranked = self.rankings(model);
        ks.iter().map(|&k| Ok((k, topk_metrics(&ranked, &self.relevant, k)?))).collect()
    }
}

pub fn recall_at_k(model: &RecallModel, eval: &RecallEval, k: usize) -> Result<f64, MetricError> {
    Ok(eval.topk(model, &[k])?[&k].recall)
}

fn batch_gradients(model: &RecallModel, triples: &[(usize, usize, usize)]) -> Result<(f64, Gradients), TrainError> {
    let net = &model.net;
    let params = &model.params;
    let total = triples.len();
    let parts: Vec<Result<(f64, Gradients), TrainError>> = triples
        .par_chunks(GRAD_SHARD)
        .map(|shard| {
            let batch = RecallBatch {
                users: shard.iter().map(|t| t.0).collect(),
                pos: shard.iter().map(|t| t.1).collect(),
                neg: shard.iter().map(|t| t.2).collect(),
            };
            let mut tape = Tape::new(params);
            let loss = net.loss_scaled(&mut tape, &batch, total)?;
            let value = tape.value(loss).item().unwrap_or(f64::NAN);
            let grads = tape.backward(loss).map_err(ModelError::from)?;
            Ok((value, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = Gradients::default();
    for p in parts {
        let (l, g) = p?;
        loss += l;
        grads.merge(&g);
    }
    Ok((loss, grads))
}

const VAL_K: usize = 10;

/// Pairwise training with uniform negatives and early stopping on
/// validation Recall@10.
pub fn train_recall(
    model: &mut RecallModel,
    train: &[LabeledPair],
    val: &[LabeledPair],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    model.net.hyper.l2 = cfg.l2;
    let sampler = NegativeSampler::new(train, model.n_users(), model.n_items());
    let mut skipped = HashSet::new();
    let positives: Vec<(u32, u32)> = train
        .iter()
        .filter(|p| p.label)
        .filter(|p| {
            let full = sampler.positives(p.user).len() >= model.n_items();
            if full && skipped.insert(p.user) {
                log::warn!("user {} has positives on every item; skipped", p.user);
            }
            !full
        })
        .map(|p| (p.user, p.item))
        .collect();
    if positives.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let eval = RecallEval::new(train, val, model.n_users());
    let mut use_val = !eval.is_empty();
    if !use_val {
        log::warn!("validation split has no positives; training for a fixed {} epochs", cfg.max_epochs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut history = Vec::new();
    let mut best_params = model.params.clone();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut triples = Vec::with_capacity(order.len() * cfg.negatives_per_positive);
        for &o in &order {
            let (u, i) = positives[o];
            for _ in 0..cfg.negatives_per_positive {
                let j = sampler.sample(u, &mut rng).expect("users with full positives are filtered");
                triples.push((u as usize, i as usize, j as usize));
            }
        }
        let mut weighted_loss = 0.0;
        for (step, chunk) in triples.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_gradients(model, chunk)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            adam_step(&mut model.params, &grads, &mut adam, cfg.learning_rate).map_err(|e| match e {
                TrainError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { epoch, step },
                other => other,
            })?;
            weighted_loss += loss * chunk.len() as f64;
        }
        let val_metric = if use_val {
            Some(recall_at_k(model, &eval, VAL_K)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            train_loss: weighted_loss / triples.len() as f64,
            val_metric,
            seconds: started.elapsed().as_secs_f64(),
        });
        match val_metric.map(|m| stopper.observe(epoch, m)) {
            Some(StopDecision::Improved) => best_params = model.params.clone(),
            Some(StopDecision::Stop) => {
                stopped_early = true;
                break;
            }
            Some(StopDecision::Continue) => {}
            None => best_params = model.params.clone(),
        }
    }
    if stopper.best().is_none() {
        use_val = false;
    }
    let (best_epoch, best_metric) = match stopper.best() {
        Some((e, m)) if use_val => (e, Some(m)),
        _ => (history.len(), None),
    };
    model.params = best_params;
    Ok(TrainReport {
        model: model.kind().name().into(),
        metric: format!("recall@{VAL_K}"),
        history,
        best_epoch,
        best_metric,
        stopped_early,
        steps: adam.t,
        checkpoint: None,
    })
}
