use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prepare::{eval_ctr, eval_recall, fit_ctr, fit_recall, fit_tokens, load_inputs, make_split, modal_label, Inputs};
use super::{Command, Manifest, ModelKind, PipelineError, Result, RunConfig, SplitKind};
use crate::dataio::{parse_interactions, sidecar_path, Dataset};
use crate::features::{Encoder, FeatureSetting, FieldSource, ModalSpec};
use crate::metrics::MetricReport;
use crate::models::{manifest_path, modal_features, read_checkpoint, write_checkpoint, CheckpointManifest, ModelFamily, SavedModel};
use crate::muqtoken::{adjusted_rand_index, ari_matrix, TokenCodebooks, TokenTable};
use crate::synth::{generate, GroundTruth, SynthConfig, SynthPaths};

/// Fixed artifact locations under a run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join(SYNTH_DIR)
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join(DATASET)
    }

    pub fn codebooks(&self) -> PathBuf {
        self.root.join(CODEBOOKS)
    }

    pub fn tokens(&self) -> PathBuf {
        self.root.join(TOKENS)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join(CHECKPOINT)
    }
}

const SYNTH_DIR: &str = "synth";
const DATASET: &str = "dataset.bin";
const CODEBOOKS: &str = "tokens/codebooks.json";
const TOKENS: &str = "tokens/tokens.csv";
const ARI: &str = "tokens/ari.csv";
const TRUTH_ARI: &str = "tokens/truth_ari.csv";
const CHECKPOINT: &str = "model.ckpt";
const TRAIN_REPORT: &str = "train_report.json";
const METRICS_JSON: &str = "metrics.json";
const METRICS_CSV: &str = "metrics.csv";

fn rel_name(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))
}

fn record_inputs(m: &mut Manifest, inputs: &Inputs) -> Result<()> {
    for f in &inputs.files {
        if f.exists() {
            m.add_input(f)?;
        }
    }
    Ok(())
}

/// Writes the synthetic dataset under `<out>/synth/`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Manifest> {
    ensure_out(cfg)?;
    let sc = cfg.synth.clone().unwrap_or(SynthConfig {
        seed: cfg.seed(),
        ..Default::default()
    });
    let data = generate(&sc)?;
    let dir = ArtifactPaths::new(&cfg.out_dir).synth_dir();
    let paths = data.write(&dir)?;
    let mut m = Manifest::new(Command::Synth, cfg);
    for p in [&paths.events, &paths.users, &paths.items, &paths.embeddings, &paths.ground_truth] {
        m.add_output(&rel_name(p, &cfg.out_dir))?;
    }
    m.add_output(&rel_name(&sidecar_path(&paths.embeddings), &cfg.out_dir))?;
    m.write()?;
    Ok(m)
}

/// Binarizes and k-core filters the event log into `<out>/dataset.bin`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest> {
    ensure_out(cfg)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let events = cfg.data.events.clone().unwrap_or(SynthPaths::in_dir(&paths.synth_dir()).events);
    if !events.exists() {
        return Err(PipelineError::MissingArtifact {
            path: events,
            hint: "set data.events or run `taste synth` first".into(),
        });
    }
    let log = parse_interactions(&events)?;
    let ds = Dataset::from_events(&log, cfg.data.threshold(), cfg.data.core())?;
    log::info!(
        "ingested {} events into {} pairs ({} users, {} items)",
        log.len(),
        ds.pairs.len(),
        ds.n_users(),
        ds.n_items()
    );
    ds.write(&paths.dataset())?;
    let mut m = Manifest::new(Command::Ingest, cfg);
    m.add_input(&events)?;
    m.add_output(DATASET)?;
    m.add_output(&rel_name(&sidecar_path(&paths.dataset()), &cfg.out_dir))?;
    m.write()?;
    Ok(m)
}

fn load_ground_truth(cfg: &RunConfig) -> Option<GroundTruth> {
    let p = SynthPaths::in_dir(&ArtifactPaths::new(&cfg.out_dir).synth_dir()).ground_truth;
    p.exists().then(|| GroundTruth::load(&p).ok()).flatten()
}

/// `layer,ari` against the planted labels of embedded items.
fn truth_ari_csv(tokens: &TokenTable, truth: &GroundTruth) -> Result<String> {
    let (_, items) = truth.index();
    let rows: Vec<(usize, usize)> = tokens
        .items
        .iter()
        .enumerate()
        .filter_map(|(r, k)| items.get(k.as_str()).map(|&i| (r, i)))
        .collect();
    let mut out = String::from("layer,ari\n");
    for l in 0..tokens.n_layers().min(truth.n_layers) {
        let a: Vec<u32> = rows.iter().map(|&(r, _)| tokens.tokens[r][l]).collect();
        let b: Vec<u32> = rows.iter().map(|&(_, i)| truth.item_clusters[i][l]).collect();
        out.push_str(&format!("{l},{}\n", adjusted_rand_index(&a, &b)?));
    }
    Ok(out)
}

/// Fits codebooks and writes the token table and ARI matrix under
/// `<out>/tokens/`.
pub fn cmd_tokenize(cfg: &RunConfig) -> Result<Manifest> {
    ensure_out(cfg)?;
    let inputs = load_inputs(cfg, false)?;
    let split = make_split(&inputs.dataset.pairs, &cfg.split, cfg.seed())?;
    let (books, table) = fit_tokens(&inputs, split.train(), cfg.token_k(), cfg.seed(), &cfg.tokenize)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    write_json(&paths.codebooks(), &books)?;
    write_text(&paths.tokens(), &table.to_csv())?;
    write_text(&cfg.out_dir.join(ARI), &ari_matrix(&table)?.to_csv())?;
    let mut m = Manifest::new(Command::Tokenize, cfg);
    record_inputs(&mut m, &inputs)?;
    m.add_output(CODEBOOKS)?;
    m.add_output(TOKENS)?;
    m.add_output(ARI)?;
    if let Some(truth) = load_ground_truth(cfg) {
        write_text(&cfg.out_dir.join(TRUTH_ARI), &truth_ari_csv(&table, &truth)?)?;
        m.add_output(TRUTH_ARI)?;
    }
    m.write()?;
    Ok(m)
}

fn load_tokens(cfg: &RunConfig, expect_k: Option<usize>) -> Result<(TokenTable, Vec<PathBuf>)> {
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let hint = "muq_token needs a token table; run `taste tokenize` first";
    for p in [paths.codebooks(), paths.tokens()] {
        if !p.exists() {
            return Err(PipelineError::MissingArtifact { path: p, hint: hint.into() });
        }
    }
    let books = TokenCodebooks::load(&paths.codebooks())?;
    let k: Vec<usize> = books.codebooks.iter().map(|c| c.k).collect();
    if let Some(want) = expect_k {
        if k.iter().any(|&x| x != want) {
            return Err(PipelineError::Config(format!(
                "token table was fitted with k={k:?} but features.modal asks for k={want}; rerun `taste tokenize`"
            )));
        }
    }
    let text = fs::read_to_string(paths.tokens()).map_err(|e| PipelineError::io(paths.tokens(), e))?;
    Ok((TokenTable::from_csv(&text, k)?, vec![paths.codebooks(), paths.tokens()]))
}

/// Trains the configured model and writes `<out>/model.ckpt` plus the
/// training report.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    ensure_out(cfg)?;
    let seed = cfg.seed();
    let mut inputs = load_inputs(cfg, false)?;
    let split = make_split(&inputs.dataset.pairs, &cfg.split, seed)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let ckpt = paths.checkpoint();
    let report = match (cfg.model.kind.ctr(), cfg.model.kind.recall()) {
        (Some(kind), _) => {
            let tokens = match cfg.features.modal {
                ModalSpec::MuqToken { k } => {
                    let (t, files) = load_tokens(cfg, Some(k))?;
                    inputs.files.extend(files);
                    Some(t)
                }
                _ => None,
            };
            let run = fit_ctr(&inputs, &split, &cfg.features, kind, &cfg.model.hyper, &cfg.train, tokens.as_ref(), seed)?;
            write_checkpoint(&ckpt, &SavedModel::Ctr(run.model), None)?;
            run.report
        }
        (_, Some(kind)) => {
            let run = fit_recall(&inputs, &split, kind, cfg.model.vbpr_input, &cfg.model.hyper, &cfg.train, seed)?;
            let vi = (cfg.model.kind == ModelKind::Vbpr).then_some(cfg.model.vbpr_input);
            write_checkpoint(&ckpt, &SavedModel::Recall(run.model), vi)?;
            run.report
        }
        _ => unreachable!("every kind is ctr or recall"),
    };
    let report = crate::train::TrainReport {
        checkpoint: Some(CHECKPOINT.into()),
        ..report
    };
    write_json(&cfg.out_dir.join(TRAIN_REPORT), &report)?;
    let mut m = Manifest::new(Command::Train, cfg);
    record_inputs(&mut m, &inputs)?;
    m.add_output(CHECKPOINT)?;
    m.add_output(&rel_name(&manifest_path(&ckpt), &cfg.out_dir))?;
    m.add_output(TRAIN_REPORT)?;
    m.write()?;
    Ok(m)
}

/// Evaluation of one checkpoint on every evaluation set of the split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub family: ModelFamily,
    pub setting: FeatureSetting,
    pub modal: ModalSpec,
    pub split: SplitKind,
    pub seed: u64,
    pub splits: BTreeMap<String, MetricReport>,
}

impl EvalReport {
    /// CTR rows `model,setting,modal,split,auc_pct,logloss_pct,count`;
    /// recall rows `model,modal,split,k,recall,precision,mrr_at_k,mrr,ndcg,users`.
    pub fn to_csv(&self) -> String {
        let setting = serde_json::to_value(self.setting)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let modal = modal_label(&self.modal);
        let opt = |v: Option<f64>| v.map(|x| format!("{:.4}", 100.0 * x)).unwrap_or_default();
        match self.family {
            ModelFamily::Ctr => {
                let mut out = String::from("model,setting,modal,split,auc_pct,logloss_pct,count\n");
                for (name, r) in &self.splits {
                    out.push_str(&format!(
                        "{},{setting},{modal},{name},{},{},{}\n",
                        self.model,
                        opt(r.auc),
                        opt(r.logloss),
                        r.count
                    ));
                }
                out
            }
            ModelFamily::Recall => {
                let mut out = String::from("model,modal,split,k,recall,precision,mrr_at_k,mrr,ndcg,users\n");
                for (name, r) in &self.splits {
                    for (k, t) in &r.topk {
                        out.push_str(&format!(
                            "{},{modal},{name},{k},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                            self.model, t.recall, t.precision, t.mrr_at_k, t.mrr, t.ndcg, t.users
                        ));
                    }
                }
                out
            }
        }
    }
}

fn read_ckpt_manifest(path: &Path) -> Result<CheckpointManifest> {
    let mp = manifest_path(path);
    if !path.exists() || !mp.exists() {
        return Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            hint: "run `taste train` first".into(),
        });
    }
    let raw = fs::read(&mp).map_err(|e| PipelineError::io(&mp, e))?;
    Ok(serde_json::from_slice(&raw)?)
}

/// Loads a checkpoint and the encoder it was trained with.
pub(crate) fn load_model(cfg: &RunConfig, inputs: &mut Inputs, path: &Path) -> Result<(SavedModel, Option<Encoder>)> {
    let cm = read_ckpt_manifest(path)?;
    let features = match (cm.family, cm.vbpr_input) {
        (ModelFamily::Recall, Some(input)) => Some(modal_features(&inputs.dataset.items, inputs.embeddings()?, input)?),
        _ => None,
    };
    let (saved, _) = read_checkpoint(path, features)?;
    inputs.files.push(path.to_path_buf());
    inputs.files.push(manifest_path(path));
    let encoder = match &saved {
        SavedModel::Ctr(model) => {
            let schema = model.schema().clone();
            let needs_tokens = schema.fields.iter().any(|f| matches!(f.source, FieldSource::Token { .. }));
            let tokens = if needs_tokens {
                let (t, files) = load_tokens(cfg, None)?;
                inputs.files.extend(files);
                Some(t)
            } else {
                None
            };
            let ds = &inputs.dataset;
            Some(Encoder::new(
                schema,
                &ds.users,
                &ds.items,
                inputs.user_meta.as_ref(),
                inputs.item_meta.as_ref(),
                tokens.as_ref(),
                inputs.embeddings.as_ref(),
            )?)
        }
        SavedModel::Recall(_) => None,
    };
    Ok((saved, encoder))
}

/// Scores the trained checkpoint on the split's test sets and writes
/// `metrics.json` and `metrics.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Manifest> {
    ensure_out(cfg)?;
    let seed = cfg.seed();
    let mut inputs = load_inputs(cfg, false)?;
    let split = make_split(&inputs.dataset.pairs, &cfg.split, seed)?;
    let ckpt = ArtifactPaths::new(&cfg.out_dir).checkpoint();
    let (saved, encoder) = load_model(cfg, &mut inputs, &ckpt)?;
    let mut splits = BTreeMap::new();
    let (model, family, setting, modal) = match &saved {
        SavedModel::Ctr(m) => {
            let enc = encoder.as_ref().expect("ctr models carry an encoder");
            for (name, pairs) in split.eval_sets() {
                splits.insert(name.to_string(), eval_ctr(m, enc, &pairs)?);
            }
            (m.kind().name().to_string(), ModelFamily::Ctr, m.schema().setting, m.schema().modal)
        }
        SavedModel::Recall(m) => {
            for (name, pairs) in split.eval_sets() {
                splits.insert(name.to_string(), eval_recall(m, split.train(), &pairs, &cfg.eval.ks)?);
            }
            (m.kind().name().to_string(), ModelFamily::Recall, FeatureSetting::IdOnly, ModalSpec::None)
        }
    };
    let report = EvalReport {
        model,
        family,
        setting,
        modal,
        split: cfg.split.kind,
        seed,
        splits,
    };
    write_json(&cfg.out_dir.join(METRICS_JSON), &report)?;
    write_text(&cfg.out_dir.join(METRICS_CSV), &report.to_csv())?;
    let mut m = Manifest::new(Command::Eval, cfg);
    record_inputs(&mut m, &inputs)?;
    m.add_output(METRICS_JSON)?;
    m.add_output(METRICS_CSV)?;
    m.write()?;
    Ok(m)
}
