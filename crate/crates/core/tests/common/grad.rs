//! Finite-difference checks over every model kind, feature setting and modal
//! variant.

use taste::features::{DenseVariant, FeatureSetting, ModalSpec, NumericMode, SchemaOptions};
use taste::models::{CtrKind, CtrModel, ModelError, ModelHyper, RecallBatch, RecallKind, RecallModel};
use taste::tensor::{gradient_check, ParamStore, Tensor, TensorError};

pub const EPS: f64 = 1e-5;
pub const MAX_REL_ERROR: f64 = 1e-4;

fn tensor_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("unexpected model error: {other}"),
    }
}

/// Moves every parameter off its initial value so zero biases do not sit on
/// ReLU kinks.
pub fn jitter(store: &mut ParamStore, seed: u64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for (e, v) in store.get_mut(id).data_mut().iter_mut().enumerate() {
            *v += 0.1 * ((seed as f64 + 1.7 * e as f64 + 3.1 * id.0 as f64).sin());
        }
    }
}

pub fn small_hyper() -> ModelHyper {
    ModelHyper {
        embed_dim: 3,
        mlp: vec![4, 3],
        cross_depth: 2,
        attention_dim: Some(2),
        adaptor_hidden: 4,
        init_std: 0.4,
        l2: 1e-2,
    }
}

pub fn combos() -> Vec<SchemaOptions> {
    let modals = [
        ModalSpec::None,
        ModalSpec::MuqDense {
            variant: DenseVariant::Mean,
        },
        ModalSpec::MuqDense {
            variant: DenseVariant::AllLayers,
        },
        ModalSpec::MuqToken { k: 2 },
    ];
    let mut out = Vec::new();
    for setting in [FeatureSetting::IdOnly, FeatureSetting::IdCategories, FeatureSetting::Full] {
        for modal in modals {
            out.push(SchemaOptions {
                setting,
                modal,
                numeric_bins: 4,
                numeric_mode: NumericMode::Bucket,
                include_text: true,
            });
        }
    }
    out.push(SchemaOptions {
        setting: FeatureSetting::Full,
        modal: ModalSpec::None,
        numeric_bins: 4,
        numeric_mode: NumericMode::FieldEmbedding,
        include_text: true,
    });
    out
}

/// One line per checked combination: `(label, max relative error)`.
pub fn ctr_checks() -> Vec<(String, f64)> {
    let w = super::world(11);
    let mut out = Vec::new();
    for opts in combos() {
        let schema = w.schema(&opts);
        let enc = w.encoder(schema.clone());
        let batch = enc.batch(&w.pairs[..5]);
        for kind in CtrKind::ALL {
            let mut model = CtrModel::new(kind, schema.clone(), small_hyper(), 3).unwrap();
            jitter(&mut model.params, 3);
            let net = model.net.clone();
            let report = gradient_check(&mut model.params, EPS, |t| net.loss(t, &batch).map_err(tensor_err)).unwrap();
            let label = format!("{kind:?} {:?}/{:?}/{:?}", opts.setting, opts.modal, opts.numeric_mode);
            out.push((label, report.max_rel_error));
        }
    }
    out
}

pub fn recall_checks() -> Vec<(String, f64)> {
    let features = Tensor::new(vec![5, 3], (0..15).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
    let batch = RecallBatch {
        users: vec![0, 1, 2, 0],
        pos: vec![0, 1, 2, 3],
        neg: vec![4, 3, 0, 1],
    };
    let mut out = Vec::new();
    for kind in [RecallKind::Bpr, RecallKind::Vbpr] {
        let mut model = RecallModel::new(kind, 3, 5, Some(features.clone()), small_hyper(), 9).unwrap();
        jitter(&mut model.params, 9);
        let net = model.net.clone();
        let report = gradient_check(&mut model.params, EPS, |t| net.loss(t, &batch).map_err(tensor_err)).unwrap();
        out.push((format!("{kind:?}"), report.max_rel_error));
    }
    out
}
