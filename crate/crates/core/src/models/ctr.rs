use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{add_row_penalty, Mlp};
use super::{ModelError, ModelHyper};
use crate::features::{Batch, Column, FeatureSchema, FieldKind, FieldSource, Instance};
use crate::tensor::{sigmoid, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtrKind {
    Lr,
    Fm,
    Ffm,
    Afm,
    WideDeep,
    #[serde(rename = "deepfm")]
    DeepFm,
    Dcnv2,
}

impl CtrKind {
    pub const ALL: [CtrKind; 7] = [
        CtrKind::Lr,
        CtrKind::Fm,
        CtrKind::Ffm,
        CtrKind::Afm,
        CtrKind::WideDeep,
        CtrKind::DeepFm,
        CtrKind::Dcnv2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CtrKind::Lr => "lr",
            CtrKind::Fm => "fm",
            CtrKind::Ffm => "ffm",
            CtrKind::Afm => "afm",
            CtrKind::WideDeep => "wide_deep",
            CtrKind::DeepFm => "deepfm",
            CtrKind::Dcnv2 => "dcnv2",
        }
    }

    fn has_first_order(self) -> bool {
        self != CtrKind::Dcnv2
    }

    fn has_embeddings(self) -> bool {
        self != CtrKind::Lr
    }
}

#[derive(Clone, Debug, PartialEq)]
enum FieldParams {
    /// Categorical, multi-hot, token or bucketed numeric.
    Table { first: Option<ParamId>, emb: Option<ParamId> },
    /// Field-embedded numeric: `x·w` and `x·v`.
    Scalar { first: Option<ParamId>, emb: Option<ParamId> },
    Dense { first: Option<ParamId>, adaptor: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
struct AfmParams {
    w: ParamId,
    b: ParamId,
    h: ParamId,
    p: ParamId,
}

/// Parameter layout and forward pass of one CTR model; values live in a
/// separate [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct CtrNet {
    pub kind: CtrKind,
    pub hyper: ModelHyper,
    pub schema: FeatureSchema,
    bias: Option<ParamId>,
    fields: Vec<FieldParams>,
    adaptors: Vec<Mlp>,
    deep: Option<Mlp>,
    cross: Vec<(ParamId, ParamId)>,
    afm: Option<AfmParams>,
    out: Option<(ParamId, ParamId)>,
}

/// One DCNv2 cross layer: `x₀ ⊙ (x_l W + b) + x_l`.
pub fn cross_layer(tape: &mut Tape<'_>, x0: Var, xl: Var, w: ParamId, b: ParamId) -> Result<Var, TensorError> {
    let wv = tape.param(w)?;
    let bv = tape.param(b)?;
    let h = tape.matmul(xl, wv)?;
    let h = tape.add(h, bv)?;
    let g = tape.mul(x0, h)?;
    tape.add(g, xl)
}

struct FieldTerms {
    first: Vec<Var>,
    emb: Vec<Var>,
    gathered: Vec<Var>,
}

fn pair_indices(m: usize) -> (Vec<usize>, Vec<usize>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            a.push(i);
            b.push(j);
        }
    }
    (a, b)
}

impl CtrNet {
    /// Builds the layout and fills `store` with freshly initialised values.
    pub fn build(
        kind: CtrKind,
        schema: FeatureSchema,
        hyper: ModelHyper,
        store: &mut ParamStore,
        seed: u64,
    ) -> Result<Self, ModelError> {
        schema.validate()?;
        if hyper.embed_dim == 0 {
            return Err(ModelError::SchemaError("embed_dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = schema.len();
        let d = hyper.embed_dim;
        let width = if kind == CtrKind::Ffm { m * d } else { d };
        let std = hyper.init_std;
        let first_order = kind.has_first_order();
        let embeds = kind.has_embeddings();

        let bias = first_order.then(|| store.zeros("bias", vec![1, 1]));
        let mut adaptors: Vec<Mlp> = Vec::new();
        let mut audio_adaptor = None;
        let mut text_adaptor = None;
        let mut fields = Vec::with_capacity(m);
        for f in &schema.fields {
            let name = &f.name;
            let params = match &f.kind {
                FieldKind::Dense { dim } => {
                    let first = first_order.then(|| store.add_normal(format!("first.{name}"), vec![*dim, 1], std, &mut rng));
                    let adaptor = if embeds {
                        let slot = if matches!(f.source, FieldSource::Text) {
                            &mut text_adaptor
                        } else {
                            &mut audio_adaptor
                        };
                        let tag = if matches!(f.source, FieldSource::Text) { "text" } else { "audio" };
                        let idx = *slot.get_or_insert_with(|| {
                            adaptors.push(Mlp::new(
                                store,
                                &format!("adaptor.{tag}"),
                                &[*dim, hyper.adaptor_hidden, width],
                                false,
                                &mut rng,
                            ));
                            adaptors.len() - 1
                        });
                        Some(idx)
                    } else {
                        None
                    };
                    FieldParams::Dense { first, adaptor }
                }
                FieldKind::Numeric {
                    mode: crate::features::NumericMode::FieldEmbedding,
                    ..
                } => FieldParams::Scalar {
                    first: first_order.then(|| store.add_normal(format!("first.{name}"), vec![1, 1], std, &mut rng)),
                    emb: embeds.then(|| store.add_normal(format!("emb.{name}"), vec![1, width], std, &mut rng)),
                },
                kind_spec => {
                    let card = kind_spec
                        .cardinality()
                        .ok_or_else(|| ModelError::SchemaError(format!("field {name} has no cardinality")))?;
                    FieldParams::Table {
                        first: first_order.then(|| store.add_normal(format!("first.{name}"), vec![card, 1], std, &mut rng)),
                        emb: embeds.then(|| store.add_normal(format!("emb.{name}"), vec![card, width], std, &mut rng)),
                    }
                }
            };
            fields.push(params);
        }

        let concat_dim = m * d;
        let mut deep = None;
        let mut cross = Vec::new();
        let mut afm = None;
        let mut out = None;
        match kind {
            CtrKind::WideDeep | CtrKind::DeepFm => {
                let mut dims = vec![concat_dim];
                dims.extend(&hyper.mlp);
                dims.push(1);
                deep = Some(Mlp::new(store, "deep", &dims, false, &mut rng));
            }
            CtrKind::Dcnv2 => {
                for l in 0..hyper.cross_depth {
                    let w = store.add_glorot(format!("cross.w{l}"), concat_dim, concat_dim, &mut rng);
                    let b = store.zeros(format!("cross.b{l}"), vec![concat_dim]);
                    cross.push((w, b));
                }
                let mut dims = vec![concat_dim];
                dims.extend(&hyper.mlp);
                let tower_out = *dims.last().expect("non-empty");
                deep = Some(Mlp::new(store, "deep", &dims, true, &mut rng));
                let total = concat_dim + if hyper.mlp.is_empty() { 0 } else { tower_out };
                let w = store.add_glorot("out.w", total, 1, &mut rng);
                let b = store.zeros("out.b", vec![1]);
                out = Some((w, b));
            }
            CtrKind::Afm => {
                let t = hyper.attention_dim.unwrap_or(d);
                afm = Some(AfmParams {
                    w: store.add_glorot("afm.w", d, t, &mut rng),
                    b: store.zeros("afm.b", vec![t]),
                    h: store.add_glorot("afm.h", t, 1, &mut rng),
                    p: store.add_glorot("afm.p", d, 1, &mut rng),
                });
            }
            _ => {}
        }
        Ok(Self {
            kind,
            hyper,
            schema,
            bias,
            fields,
            adaptors,
            deep,
            cross,
            afm,
            out,
        })
    }

    fn field_terms(&self, tape: &mut Tape<'_>, batch: &Batch) -> Result<FieldTerms, ModelError> {
        if batch.columns.len() != self.fields.len() {
            return Err(ModelError::SchemaError(format!(
                "batch has {} columns, model expects {}",
                batch.columns.len(),
                self.fields.len()
            )));
        }
        let mut terms = FieldTerms {
            first: Vec::new(),
            emb: Vec::new(),
            gathered: Vec::new(),
        };
        for (f, (params, col)) in self.fields.iter().zip(&batch.columns).enumerate() {
            let mismatch = || ModelError::SchemaError(format!("column {f} does not match field {}", self.schema.fields[f].name));
            match (params, col) {
                (FieldParams::Table { first, emb }, Column::Index(idx)) => {
                    if let Some(p) = first {
                        let v = tape.gather(*p, idx)?;
                        terms.first.push(v);
                        terms.gathered.push(v);
                    }
                    if let Some(p) = emb {
                        let v = tape.gather(*p, idx)?;
                        terms.emb.push(v);
                        terms.gathered.push(v);
                    }
                }
                (FieldParams::Table { first, emb }, Column::Bag(bags)) => {
                    if let Some(p) = first {
                        let v = tape.gather_mean(*p, bags)?;
                        terms.first.push(v);
                        terms.gathered.push(v);
                    }
                    if let Some(p) = emb {
                        let v = tape.gather_mean(*p, bags)?;
                        terms.emb.push(v);
                        terms.gathered.push(v);
                    }
                }
                (FieldParams::Scalar { first, emb }, Column::Scalar(x)) => {
                    let xv = tape.constant(x.clone())?;
                    if let Some(p) = first {
                        let w = tape.param(*p)?;
                        terms.first.push(tape.matmul(xv, w)?);
                    }
                    if let Some(p) = emb {
                        let v = tape.param(*p)?;
                        terms.emb.push(tape.matmul(xv, v)?);
                    }
                }
                (FieldParams::Dense { first, adaptor }, Column::Dense(x)) => {
                    let xv = tape.constant(x.clone())?;
                    if let Some(p) = first {
                        let w = tape.param(*p)?;
                        terms.first.push(tape.matmul(xv, w)?);
                    }
                    if let Some(a) = adaptor {
                        terms.emb.push(self.adaptors[*a].forward(tape, xv)?);
                    }
                }
                _ => return Err(mismatch()),
            }
        }
        Ok(terms)
    }

    fn linear_logit(&self, tape: &mut Tape<'_>, terms: &FieldTerms, n: usize) -> Result<Var, TensorError> {
        let cat = tape.concat(&terms.first)?;
        let s = tape.sum_axis(cat, 1)?;
        let s = tape.reshape(s, vec![n, 1])?;
        let b = tape.param(self.bias.expect("first-order kinds carry a bias"))?;
        tape.add(s, b)
    }

    fn stacked(&self, tape: &mut Tape<'_>, terms: &FieldTerms, n: usize) -> Result<Var, TensorError> {
        let cat = tape.concat(&terms.emb)?;
        let w = tape.shape(terms.emb[0])[1];
        tape.reshape(cat, vec![n, terms.emb.len(), w])
    }

    fn fm_logit(&self, tape: &mut Tape<'_>, stacked: Var, n: usize) -> Result<Var, TensorError> {
        let sum = tape.sum_axis(stacked, 1)?;
        let sq_of_sum = tape.mul(sum, sum)?;
        let a = tape.sum_axis(sq_of_sum, 1)?;
        let sq = tape.mul(stacked, stacked)?;
        let per_field = tape.sum_axis(sq, 2)?;
        let b = tape.sum_axis(per_field, 1)?;
        let diff = tape.sub(a, b)?;
        let half = tape.scale(diff, 0.5)?;
        tape.reshape(half, vec![n, 1])
    }

    fn ffm_logit(&self, tape: &mut Tape<'_>, stacked: Var, n: usize) -> Result<Var, TensorError> {
        let m = self.fields.len();
        let d = self.hyper.embed_dim;
        let grid = tape.reshape(stacked, vec![n, m * m, d])?;
        let (is, js) = pair_indices(m);
        if is.is_empty() {
            return tape.constant(Tensor::zeros(vec![n, 1]));
        }
        let ij: Vec<usize> = is.iter().zip(&js).map(|(&i, &j)| i * m + j).collect();
        let ji: Vec<usize> = is.iter().zip(&js).map(|(&i, &j)| j * m + i).collect();
        let a = tape.index_select(grid, 1, &ij)?;
        let b = tape.index_select(grid, 1, &ji)?;
        let prod = tape.mul(a, b)?;
        let dots = tape.sum_axis(prod, 2)?;
        let s = tape.sum_axis(dots, 1)?;
        tape.reshape(s, vec![n, 1])
    }

    /// AFM pooled interaction logit and the `(n, pairs)` attention weights.
    fn afm_parts(&self, tape: &mut Tape<'_>, stacked: Var, n: usize) -> Result<(Var, Var), TensorError> {
        let p = self.afm.as_ref().expect("afm params");
        let m = self.fields.len();
        let d = self.hyper.embed_dim;
        let (is, js) = pair_indices(m);
        let npairs = is.len().max(1);
        let (is, js) = if is.is_empty() { (vec![0], vec![0]) } else { (is, js) };
        let a = tape.index_select(stacked, 1, &is)?;
        let b = tape.index_select(stacked, 1, &js)?;
        let prod = tape.mul(a, b)?;
        let flat = tape.reshape(prod, vec![n * npairs, d])?;
        let w = tape.param(p.w)?;
        let bias = tape.param(p.b)?;
        let h = tape.param(p.h)?;
        let hidden = tape.matmul(flat, w)?;
        let hidden = tape.add(hidden, bias)?;
        let hidden = tape.relu(hidden)?;
        let scores = tape.matmul(hidden, h)?;
        let scores = tape.reshape(scores, vec![n, npairs])?;
        let att = tape.softmax(scores)?;
        let att3 = tape.reshape(att, vec![n, npairs, 1])?;
        let weighted = tape.mul(prod, att3)?;
        let pooled = tape.sum_axis(weighted, 1)?;
        let pv = tape.param(p.p)?;
        Ok((tape.matmul(pooled, pv)?, att))
    }

    /// `(n, 1)` logits.
    pub fn logits(&self, tape: &mut Tape<'_>, batch: &Batch) -> Result<(Var, Vec<Var>), ModelError> {
        let n = batch.len;
        let terms = self.field_terms(tape, batch)?;
        let logit = match self.kind {
            CtrKind::Lr => self.linear_logit(tape, &terms, n)?,
            CtrKind::Fm => {
                let lin = self.linear_logit(tape, &terms, n)?;
                let st = self.stacked(tape, &terms, n)?;
                let fm = self.fm_logit(tape, st, n)?;
                tape.add(lin, fm)?
            }
            CtrKind::Ffm => {
                let lin = self.linear_logit(tape, &terms, n)?;
                let st = self.stacked(tape, &terms, n)?;
                let ffm = self.ffm_logit(tape, st, n)?;
                tape.add(lin, ffm)?
            }
            CtrKind::Afm => {
                let lin = self.linear_logit(tape, &terms, n)?;
                let st = self.stacked(tape, &terms, n)?;
                let (afm, _) = self.afm_parts(tape, st, n)?;
                tape.add(lin, afm)?
            }
            CtrKind::WideDeep => {
                let lin = self.linear_logit(tape, &terms, n)?;
                let x = tape.concat(&terms.emb)?;
                let deep = self.deep.as_ref().expect("deep tower").forward(tape, x)?;
                tape.add(lin, deep)?
            }
            CtrKind::DeepFm => {
                let lin = self.linear_logit(tape, &terms, n)?;
                let st = self.stacked(tape, &terms, n)?;
                let fm = self.fm_logit(tape, st, n)?;
                let x = tape.concat(&terms.emb)?;
                let deep = self.deep.as_ref().expect("deep tower").forward(tape, x)?;
                let s = tape.add(lin, fm)?;
                tape.add(s, deep)?
            }
            CtrKind::Dcnv2 => {
                let x0 = tape.concat(&terms.emb)?;
                let mut xl = x0;
                for &(w, b) in &self.cross {
                    xl = cross_layer(tape, x0, xl, w, b)?;
                }
                let joined = if self.hyper.mlp.is_empty() {
                    xl
                } else {
                    let tower = self.deep.as_ref().expect("deep tower").forward(tape, x0)?;
                    tape.concat(&[xl, tower])?
                };
                let (w, b) = self.out.expect("output projection");
                let wv = tape.param(w)?;
                let bv = tape.param(b)?;
                let o = tape.matmul(joined, wv)?;
                tape.add(o, bv)?
            }
        };
        Ok((logit, terms.gathered))
    }

    /// Mean BCE-with-logits plus the gathered-row L2 penalty.
    pub fn loss(&self, tape: &mut Tape<'_>, batch: &Batch) -> Result<Var, ModelError> {
        self.loss_scaled(tape, batch, batch.len)
    }

    /// Loss contribution of a shard of a batch with `total` rows; shard
    /// losses of one batch sum to that batch's [`CtrNet::loss`].
    pub fn loss_scaled(&self, tape: &mut Tape<'_>, batch: &Batch, total: usize) -> Result<Var, ModelError> {
        let (logit, gathered) = self.logits(tape, batch)?;
        let flat = tape.reshape(logit, vec![batch.len])?;
        let bce = tape.bce_with_logits(flat, &batch.labels)?;
        let sum = tape.sum(bce)?;
        let mean = tape.scale(sum, 1.0 / total as f64)?;
        Ok(add_row_penalty(tape, mean, &gathered, self.hyper.l2, total)?)
    }

    /// Attention weights per pair for AFM models.
    pub fn attention_weights(&self, store: &ParamStore, batch: &Batch) -> Result<Option<Tensor>, ModelError> {
        if self.kind != CtrKind::Afm {
            return Ok(None);
        }
        let mut tape = Tape::inference(store);
        let terms = self.field_terms(&mut tape, batch)?;
        let st = self.stacked(&mut tape, &terms, batch.len)?;
        let (_, att) = self.afm_parts(&mut tape, st, batch.len)?;
        Ok(Some(tape.value(att).clone()))
    }
}

/// A CTR network together with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct CtrModel {
    pub net: CtrNet,
    pub params: ParamStore,
}

const PREDICT_CHUNK: usize = 4096;

impl CtrModel {
    pub fn new(kind: CtrKind, schema: FeatureSchema, hyper: ModelHyper, seed: u64) -> Result<Self, ModelError> {
        let mut params = ParamStore::new();
        let net = CtrNet::build(kind, schema, hyper, &mut params, seed)?;
        Ok(Self { net, params })
    }

    pub fn kind(&self) -> CtrKind {
        self.net.kind
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.net.schema
    }

    /// Raw logits on an inference tape.
    pub fn predict_logits(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::inference(&self.params);
        let (logit, _) = self.net.logits(&mut tape, batch)?;
        Ok(tape.value(logit).data().to_vec())
    }

    /// Click probabilities.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict_logits(batch)?.into_iter().map(sigmoid).collect())
    }

    /// Scores instances encoded against this model's schema.
    pub fn ctr_forward(&self, instances: &[Instance]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(instances.len());
        for chunk in instances.chunks(PREDICT_CHUNK) {
            let batch = Batch::from_instances(&self.net.schema, chunk)?;
            out.extend(self.predict(&batch)?);
        }
        Ok(out)
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }
}
