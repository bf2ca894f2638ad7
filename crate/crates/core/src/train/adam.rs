use super::TrainError;
use crate::tensor::{Gradients, ParamStore, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, _, p)| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient are treated
/// as having a zero gradient.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    if !grads.all_finite() {
        return Err(TrainError::NonFiniteGradient { epoch: 0, step: state.t as usize });
    }
    if state.m.len() != store.len() {
        return Err(TrainError::ShapeMismatch);
    }
    if grads.iter().any(|(id, g)| id.0 >= store.len() || g.shape() != store.get(id).shape()) {
        return Err(TrainError::ShapeMismatch);
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let g = grads.get(id).map(Tensor::data);
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let p = store.get_mut(id).data_mut();
        for e in 0..p.len() {
            let ge = g.map_or(0.0, |g| g[e]);
            m[e] = ADAM_BETA1 * m[e] + (1.0 - ADAM_BETA1) * ge;
            v[e] = ADAM_BETA2 * v[e] + (1.0 - ADAM_BETA2) * ge * ge;
            let mh = m[e] / c1;
            let vh = v[e] / c2;
            p[e] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
