use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::recall::VbprInput;
use super::{CtrKind, CtrModel, CtrNet, ModelError, ModelHyper, RecallKind, RecallModel, RecallNet};
use crate::features::FeatureSchema;
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TASTECKP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Ctr,
    Recall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON description written next to the binary payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub family: ModelFamily,
    pub kind: String,
    pub schema_hash: String,
    pub hyper: ModelHyper,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<FeatureSchema>,
    pub params: Vec<ParamShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_items: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vbpr_input: Option<VbprInput>,
}

/// Any trained model that can be checkpointed.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Ctr(CtrModel),
    Recall(RecallModel),
}

impl SavedModel {
    fn params(&self) -> &ParamStore {
        match self {
            SavedModel::Ctr(m) => &m.params,
            SavedModel::Recall(m) => &m.params,
        }
    }
}

fn recall_hash(kind: RecallKind, n_users: usize, n_items: usize, modal_dim: Option<usize>) -> String {
    let desc = serde_json::json!({
        "kind": kind.name(),
        "n_users": n_users,
        "n_items": n_items,
        "modal_dim": modal_dim,
    });
    hex::encode(Sha256::digest(desc.to_string().as_bytes()))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Manifest for `model`; `vbpr_input` is recorded for VBPR models only.
pub fn manifest_for(model: &SavedModel, vbpr_input: Option<VbprInput>) -> CheckpointManifest {
    let params = model
        .params()
        .iter()
        .map(|(_, name, t)| ParamShape {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect();
    match model {
        SavedModel::Ctr(m) => CheckpointManifest {
            family: ModelFamily::Ctr,
            kind: m.net.kind.name().into(),
            schema_hash: m.net.schema.hash(),
            hyper: m.net.hyper.clone(),
            schema: Some(m.net.schema.clone()),
            params,
            n_users: None,
            n_items: None,
            modal_dim: None,
            vbpr_input: None,
        },
        SavedModel::Recall(m) => {
            let modal_dim = m.net.features.as_ref().map(|f| f.shape()[1]);
            CheckpointManifest {
                family: ModelFamily::Recall,
                kind: m.net.kind.name().into(),
                schema_hash: recall_hash(m.net.kind, m.net.n_users, m.net.n_items, modal_dim),
                hyper: m.net.hyper.clone(),
                schema: None,
                params,
                n_users: Some(m.net.n_users),
                n_items: Some(m.net.n_items),
                modal_dim,
                vbpr_input: if m.net.kind == RecallKind::Vbpr { vbpr_input.or(Some(VbprInput::MeanPooled)) } else { None },
            }
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Binary payload: magic, version, family, kind, schema hash, shapes, f32 values.
pub fn checkpoint_bytes(model: &SavedModel, manifest: &CheckpointManifest) -> Result<Vec<u8>, ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    out.push(match manifest.family {
        ModelFamily::Ctr => 0,
        ModelFamily::Recall => 1,
    });
    put_u32(&mut out, manifest.kind.len() as u32);
    out.extend_from_slice(manifest.kind.as_bytes());
    let hash = hex::decode(&manifest.schema_hash).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if hash.len() != 32 {
        return Err(ModelError::Checkpoint("schema hash must be 32 bytes".into()));
    }
    out.extend_from_slice(&hash);
    let params = model.params();
    put_u32(&mut out, params.len() as u32);
    for (_, name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
    }
    for (_, _, t) in params.iter() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the binary checkpoint to `path` and its manifest to `<path>.json`.
pub fn write_checkpoint(path: &Path, model: &SavedModel, vbpr_input: Option<VbprInput>) -> Result<CheckpointManifest, ModelError> {
    let manifest = manifest_for(model, vbpr_input);
    let bytes = checkpoint_bytes(model, &manifest)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

/// Rebuilds the model described by the manifest and fills in the payload.
/// VBPR needs the content matrix it was trained with.
pub fn model_from_bytes(bytes: &[u8], manifest: &CheckpointManifest, features: Option<Tensor>) -> Result<SavedModel, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let family = match r.take(1)?[0] {
        0 => ModelFamily::Ctr,
        1 => ModelFamily::Recall,
        b => return Err(ModelError::Checkpoint(format!("unknown family tag {b}"))),
    };
    let kind = r.string()?;
    let hash = hex::encode(r.take(32)?);
    if family != manifest.family || kind != manifest.kind || hash != manifest.schema_hash {
        return Err(ModelError::Checkpoint("payload header disagrees with manifest".into()));
    }
    let kind_json = serde_json::Value::String(kind.clone());
    let mut model = match family {
        ModelFamily::Ctr => {
            let schema = manifest
                .schema
                .clone()
                .ok_or_else(|| ModelError::Checkpoint("ctr manifest lacks a schema".into()))?;
            if schema.hash() != hash {
                return Err(ModelError::Checkpoint("schema hash mismatch".into()));
            }
            let kind: CtrKind = serde_json::from_value(kind_json)?;
            let mut params = ParamStore::new();
            let net = CtrNet::build(kind, schema, manifest.hyper.clone(), &mut params, 0)?;
            SavedModel::Ctr(CtrModel { net, params })
        }
        ModelFamily::Recall => {
            let kind: RecallKind = serde_json::from_value(kind_json)?;
            let (n_users, n_items) = manifest
                .n_users
                .zip(manifest.n_items)
                .ok_or_else(|| ModelError::Checkpoint("recall manifest lacks entity counts".into()))?;
            let features = if kind == RecallKind::Vbpr { features } else { None };
            let modal_dim = features.as_ref().map(|f| f.shape()[1]);
            if modal_dim != manifest.modal_dim {
                return Err(ModelError::Checkpoint(format!(
                    "content matrix width {modal_dim:?} does not match manifest {:?}",
                    manifest.modal_dim
                )));
            }
            if recall_hash(kind, n_users, n_items, modal_dim) != hash {
                return Err(ModelError::Checkpoint("schema hash mismatch".into()));
            }
            let mut params = ParamStore::new();
            let net = RecallNet::build(kind, n_users, n_items, features, manifest.hyper.clone(), &mut params, 0)?;
            SavedModel::Recall(RecallModel { net, params })
        }
    };
    let store = match &mut model {
        SavedModel::Ctr(m) => &mut m.params,
        SavedModel::Recall(m) => &mut m.params,
    };
    let n = r.u32()? as usize;
    if n != store.len() {
        return Err(ModelError::Checkpoint(format!("{n} tensors stored, model has {}", store.len())));
    }
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != store.name(id) || shape != store.get(id).shape() {
            return Err(ModelError::Checkpoint(format!("tensor {name} {shape:?} does not match layout")));
        }
    }
    for &id in &ids {
        let numel = store.get(id).numel();
        let raw = r.take(numel * 4)?;
        let t = store.get_mut(id);
        for (dst, c) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

/// Loads `path` and `<path>.json`.
pub fn read_checkpoint(path: &Path, features: Option<Tensor>) -> Result<(SavedModel, CheckpointManifest), ModelError> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(manifest_path(path))?)?;
    let bytes = fs::read(path)?;
    let model = model_from_bytes(&bytes, &manifest, features)?;
    Ok((model, manifest))
}
