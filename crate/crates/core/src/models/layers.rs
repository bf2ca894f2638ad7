use rand::Rng;
use crate::tensor::{ParamId, ParamStore, Tape, TensorError, Var};

/// Fully connected tower; ReLU between layers, optionally after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
    pub relu_last: bool,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        relu_last: bool,
        rng: &mut R,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = store.add_glorot(format!("{name}.w{i}"), w[0], w[1], rng);
                let bias = store.zeros(format!("{name}.b{i}"), vec![w[1]]);
                (weight, bias)
            })
            .collect();
        Self { layers, relu_last }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, mut x: Var) -> Result<Var, TensorError> {
        let n = self.layers.len();
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(w)?;
            let bv = tape.param(b)?;
            let h = tape.matmul(x, wv)?;
            x = tape.add(h, bv)?;
            if i + 1 < n || self.relu_last {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }
}

/// Adds `l2 · Σ‖rows‖² / batch` for each gathered block to `loss`.
pub fn add_row_penalty(tape: &mut Tape<'_>, loss: Var, rows: &[Var], l2: f64, batch: usize) -> Result<Var, TensorError> {
    if l2 == 0.0 || rows.is_empty() {
        return Ok(loss);
    }
    let mut total = loss;
    for &r in rows {
        let sq = tape.mul(r, r)?;
        let s = tape.sum(sq)?;
        let s = tape.scale(s, l2 / batch as f64)?;
        total = tape.add(total, s)?;
    }
    Ok(total)
}
