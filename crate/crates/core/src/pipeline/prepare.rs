use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{ArtifactPaths, PipelineError, Result, RunConfig, SplitConfig, SplitKind, TokenizeConfig};
use crate::dataio::{
    parse_interactions, parse_metadata, split_cold_start, split_random, ColdSplitSet, Dataset, EntityKind, EventLog,
    LabeledPair, LayeredEmbeddings, MetadataTable, SplitSet,
};
use crate::features::{build_schema, DenseVariant, Encoder, ModalSpec, SchemaContext, SchemaOptions};
use crate::metrics::{auc, logloss, MetricError, MetricReport};
use crate::models::{modal_features, CtrKind, CtrModel, ModelHyper, RecallKind, RecallModel, VbprInput};
use crate::muqtoken::{tokenize_rows, TokenCodebooks, TokenTable};
use crate::synth::SynthData;
use crate::train::{predict_pairs, train_ctr, train_recall, RecallEval, TrainConfig, TrainReport};

/// A dataset with whatever side inputs were supplied.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub dataset: Dataset,
    pub events: Option<EventLog>,
    pub user_meta: Option<MetadataTable>,
    pub item_meta: Option<MetadataTable>,
    pub embeddings: Option<LayeredEmbeddings>,
    /// Files read, for manifests.
    pub files: Vec<PathBuf>,
}

impl Inputs {
    pub fn embeddings(&self) -> Result<&LayeredEmbeddings> {
        self.embeddings.as_ref().ok_or_else(|| PipelineError::MissingArtifact {
            path: PathBuf::from("embeddings.temb"),
            hint: "set data.embeddings or run `taste synth` first".into(),
        })
    }
}

/// Ingests an in-memory synthetic dataset.
pub fn synth_inputs(data: SynthData, threshold: u32, core: u32) -> Result<Inputs> {
    let dataset = Dataset::from_events(&data.events, threshold, core)?;
    Ok(Inputs {
        dataset,
        events: Some(data.events),
        user_meta: Some(data.user_meta),
        item_meta: Some(data.item_meta),
        embeddings: Some(data.embeddings),
        files: Vec::new(),
    })
}

fn existing(explicit: &Option<PathBuf>, fallback: PathBuf) -> Option<PathBuf> {
    match explicit {
        Some(p) => Some(p.clone()),
        None => fallback.exists().then_some(fallback),
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.into(),
        })
    }
}

/// Loads the run's inputs from disk. The dataset artifact is used when
/// present; otherwise the events are ingested in memory. Unset side-input
/// paths fall back to the synth output under `out_dir`.
pub fn load_inputs(cfg: &RunConfig, need_events: bool) -> Result<Inputs> {
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let synth = crate::synth::SynthPaths::in_dir(&paths.synth_dir());
    let mut files = Vec::new();
    let events_path = cfg.data.events.clone().unwrap_or(synth.events.clone());
    let dataset_path = paths.dataset();
    let mut events = None;
    let dataset = if dataset_path.exists() && !need_events {
        files.push(dataset_path.clone());
        files.push(crate::dataio::sidecar_path(&dataset_path));
        Dataset::load(&dataset_path)?
    } else {
        require(&events_path, "set data.events or run `taste synth` first")?;
        files.push(events_path.clone());
        let log = parse_interactions(&events_path)?;
        let ds = Dataset::from_events(&log, cfg.data.threshold(), cfg.data.core())?;
        events = Some(log);
        ds
    };
    let mut meta = |explicit: &Option<PathBuf>, fallback: PathBuf, kind| -> Result<Option<MetadataTable>> {
        match existing(explicit, fallback) {
            Some(p) => {
                require(&p, "metadata file not found")?;
                files.push(p.clone());
                Ok(Some(parse_metadata(&p, kind)?))
            }
            None => Ok(None),
        }
    };
    let user_meta = meta(&cfg.data.users, synth.users.clone(), EntityKind::User)?;
    let item_meta = meta(&cfg.data.items, synth.items.clone(), EntityKind::Item)?;
    let embeddings = match existing(&cfg.data.embeddings, synth.embeddings.clone()) {
        Some(p) => {
            require(&p, "embedding file not found")?;
            files.push(p.clone());
            files.push(crate::dataio::sidecar_path(&p));
            Some(LayeredEmbeddings::load(&p)?)
        }
        None => None,
    };
    Ok(Inputs {
        dataset,
        events,
        user_meta,
        item_meta,
        embeddings,
        files,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Split {
    Random(SplitSet),
    Cold(ColdSplitSet),
}

impl Split {
    pub fn train(&self) -> &[LabeledPair] {
        match self {
            Split::Random(s) => &s.train,
            Split::Cold(s) => &s.train,
        }
    }

    pub fn validation(&self) -> Vec<LabeledPair> {
        match self {
            Split::Random(s) => s.validation.clone(),
            Split::Cold(s) => s.validation(),
        }
    }

    /// Named evaluation sets: `test`, plus `cold_test` and `warm_test` for
    /// the cold-start protocol.
    pub fn eval_sets(&self) -> Vec<(&'static str, Vec<LabeledPair>)> {
        match self {
            Split::Random(s) => vec![("test", s.test.clone())],
            Split::Cold(s) => vec![
                ("test", s.test()),
                ("cold_test", s.cold_test.clone()),
                ("warm_test", s.warm_test.clone()),
            ],
        }
    }
}

pub fn make_split(pairs: &[LabeledPair], cfg: &SplitConfig, seed: u64) -> Result<Split> {
    Ok(match cfg.kind {
        SplitKind::Random => Split::Random(split_random(pairs, cfg.ratios, seed)?),
        SplitKind::Cold => Split::Cold(split_cold_start(pairs, cfg.cold_fraction, cfg.ratios, seed)?),
    })
}

/// Fits per-layer codebooks (on training items when `fit_on_train`) and
/// tokenizes every embedded item.
pub fn fit_tokens(
    inputs: &Inputs,
    train: &[LabeledPair],
    k: usize,
    seed: u64,
    cfg: &TokenizeConfig,
) -> Result<(TokenCodebooks, TokenTable)> {
    let emb = inputs.embeddings()?;
    let rows: Option<Vec<usize>> = cfg.fit_on_train.then(|| {
        let items: BTreeSet<u32> = train.iter().map(|p| p.item).collect();
        let mut rows: Vec<usize> = items.iter().filter_map(|&i| emb.row_of(inputs.dataset.items.key(i))).collect();
        rows.sort_unstable();
        rows
    });
    if rows.as_ref().is_some_and(|r| r.is_empty()) {
        return Err(PipelineError::Data("no training item has an embedding row".into()));
    }
    Ok(tokenize_rows(emb, k, seed, rows.as_deref(), &cfg.kmeans, cfg.z_score)?)
}

/// Human-readable modal tag used in CSV rows.
pub fn modal_label(m: &ModalSpec) -> String {
    match m {
        ModalSpec::None => "none".into(),
        ModalSpec::MuqDense { variant: DenseVariant::Mean } => "muq_dense_mean".into(),
        ModalSpec::MuqDense {
            variant: DenseVariant::AllLayers,
        } => "muq_dense_all_layers".into(),
        ModalSpec::MuqToken { k } => format!("muq_token_k{k}"),
    }
}

pub struct CtrRun {
    pub model: CtrModel,
    pub encoder: Encoder,
    pub report: TrainReport,
}

/// Builds the schema on the training pairs, then trains `kind` with early
/// stopping on validation AUC. Model init and shuffling use `seed`.
#[allow(clippy::too_many_arguments)]
pub fn fit_ctr(
    inputs: &Inputs,
    split: &Split,
    opts: &SchemaOptions,
    kind: CtrKind,
    hyper: &ModelHyper,
    train_cfg: &TrainConfig,
    tokens: Option<&TokenTable>,
    seed: u64,
) -> Result<CtrRun> {
    if matches!(opts.modal, ModalSpec::MuqToken { .. }) && tokens.is_none() {
        return Err(PipelineError::MissingArtifact {
            path: PathBuf::from("tokens/tokens.csv"),
            hint: "muq_token needs a token table; run `taste tokenize` first".into(),
        });
    }
    let ds = &inputs.dataset;
    let ctx = SchemaContext {
        users: &ds.users,
        items: &ds.items,
        user_meta: inputs.user_meta.as_ref(),
        item_meta: inputs.item_meta.as_ref(),
        fit_pairs: split.train(),
        embeddings: inputs.embeddings.as_ref(),
    };
    let schema = build_schema(&ctx, opts)?;
    let encoder = Encoder::new(
        schema.clone(),
        &ds.users,
        &ds.items,
        inputs.user_meta.as_ref(),
        inputs.item_meta.as_ref(),
        tokens,
        inputs.embeddings.as_ref(),
    )?;
    let mut model = CtrModel::new(kind, schema, hyper.clone(), seed)?;
    let cfg = TrainConfig { seed, ..train_cfg.clone() };
    let report = train_ctr(&mut model, &encoder, split.train(), &split.validation(), &cfg)?;
    Ok(CtrRun { model, encoder, report })
}

/// AUC (absent for single-class sets) and LogLoss on `pairs`.
pub fn eval_ctr(model: &CtrModel, encoder: &Encoder, pairs: &[LabeledPair]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Ok(MetricReport::default());
    }
    let probs = predict_pairs(model, encoder, pairs)?;
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(PipelineError::Numerical("non-finite prediction".into()));
    }
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    let auc = match auc(&labels, &probs) {
        Ok(a) => Some(a),
        Err(MetricError::UndefinedAuc) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(MetricReport {
        auc,
        logloss: Some(logloss(&labels, &probs)?),
        count: pairs.len(),
        topk: Default::default(),
    })
}

pub struct RecallRun {
    pub model: RecallModel,
    pub report: TrainReport,
}

pub fn fit_recall(
    inputs: &Inputs,
    split: &Split,
    kind: RecallKind,
    vbpr_input: VbprInput,
    hyper: &ModelHyper,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<RecallRun> {
    let ds = &inputs.dataset;
    let features = match kind {
        RecallKind::Bpr => None,
        RecallKind::Vbpr => Some(modal_features(&ds.items, inputs.embeddings()?, vbpr_input)?),
    };
    let mut model = RecallModel::new(kind, ds.n_users(), ds.n_items(), features, hyper.clone(), seed)?;
    let cfg = TrainConfig { seed, ..train_cfg.clone() };
    let report = train_recall(&mut model, split.train(), &split.validation(), &cfg)?;
    Ok(RecallRun { model, report })
}

/// Top-K metrics for users with held-out positives in `eval`.
pub fn eval_recall(model: &RecallModel, train: &[LabeledPair], eval: &[LabeledPair], ks: &[usize]) -> Result<MetricReport> {
    let ev = RecallEval::new(train, eval, model.n_users());
    if ev.is_empty() {
        return Ok(MetricReport::default());
    }
    Ok(MetricReport {
        auc: None,
        logloss: None,
        count: ev.users().len(),
        topk: ev.topk(model, ks)?,
    })
}
