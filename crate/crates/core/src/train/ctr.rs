use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::report::{EarlyStopper, EpochRecord, StopDecision, TrainReport};
use super::{TrainConfig, TrainError, GRAD_SHARD};
use crate::dataio::LabeledPair;
use crate::features::Encoder;
use crate::metrics::{auc, MetricError};
use crate::models::{CtrModel, ModelError};
use crate::tensor::{Gradients, Tape};

const PREDICT_CHUNK: usize = 4096;

/// Click probabilities for `pairs`, scored in parallel chunks.
pub fn predict_pairs(model: &CtrModel, enc: &Encoder, pairs: &[LabeledPair]) -> Result<Vec<f64>, ModelError> {
    let parts: Vec<Result<Vec<f64>, ModelError>> = pairs
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| model.predict(&enc.batch(chunk)))
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn evaluate_auc(model: &CtrModel, enc: &Encoder, pairs: &[LabeledPair]) -> Result<f64, TrainError> {
    let probs = predict_pairs(model, enc, pairs)?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    Ok(auc(&labels, &probs)?)
}

/// Loss and summed gradient of one mini-batch.
fn batch_gradients(model: &CtrModel, enc: &Encoder, pairs: &[LabeledPair]) -> Result<(f64, Gradients), TrainError> {
    let net = &model.net;
    let params = &model.params;
    let total = pairs.len();
    let parts: Vec<Result<(f64, Gradients), TrainError>> = pairs
        .par_chunks(GRAD_SHARD)
        .map(|shard| {
            let batch = enc.batch(shard);
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

/// Mini-batch Adam on `train` with early stopping on validation AUC; the
/// best epoch's parameters are restored before returning.
pub fn train_ctr(
    model: &mut CtrModel,
    enc: &Encoder,
    train: &[LabeledPair],
    val: &[LabeledPair],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    model.net.hyper.l2 = cfg.l2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best_params = model.params.clone();
    let mut use_val = !val.is_empty();
    if !use_val {
        log::warn!("validation split is empty; training for a fixed {} epochs", cfg.max_epochs);
    }
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs: Vec<LabeledPair> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = batch_gradients(model, enc, &pairs)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            adam_step(&mut model.params, &grads, &mut adam, cfg.learning_rate).map_err(|e| match e {
                TrainError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { epoch, step },
                other => other,
            })?;
            weighted_loss += loss * pairs.len() as f64;
        }
        let val_metric = if use_val {
            match evaluate_auc(model, enc, val) {
                Ok(a) => Some(a),
                Err(TrainError::Metric(MetricError::UndefinedAuc)) => {
                    log::warn!("validation split has a single class; training for a fixed {} epochs", cfg.max_epochs);
                    use_val = false;
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            train_loss: weighted_loss / train.len() as f64,
            val_metric,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: loss {:.5} val {:?}", weighted_loss / train.len() as f64, val_metric);
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
    let (best_epoch, best_metric) = match stopper.best() {
        Some((e, m)) if use_val => (e, Some(m)),
        _ => (history.len(), None),
    };
    model.params = best_params;
    Ok(TrainReport {
        model: model.kind().name().into(),
        metric: "auc".into(),
        history,
        best_epoch,
        best_metric,
        stopped_early,
        steps: adam.t,
        checkpoint: None,
    })
}
