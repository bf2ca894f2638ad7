use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prepare::{eval_ctr, fit_ctr, fit_tokens, load_inputs, make_split, modal_label, synth_inputs, Inputs, Split};
use super::stages::{load_model, write_json, write_text};
use super::stats::{paired_t_test, PairedTTest};
use super::{Command, Manifest, PipelineError, Result, RunConfig, SplitConfig, SplitKind};
use crate::dataio::LabeledPair;
use crate::features::{Encoder, ModalSpec, SchemaOptions};
use crate::metrics::{item_popularity, popularity_histogram, quantile_edges, MetricReport, PopularityHistogram};
use crate::models::{rank_items, CtrKind, CtrModel, SavedModel};
use crate::muqtoken::TokenTable;
use crate::synth::{generate, SynthConfig};
use crate::train::user_histories;

/// Per-seed inputs: regenerated from the synth config when one is given,
/// otherwise the on-disk dataset shared by every seed.
fn inputs_for_seed(cfg: &RunConfig, seed: u64, shared: Option<&Inputs>) -> Result<Inputs> {
    match (&cfg.synth, shared) {
        (Some(sc), _) => synth_inputs(generate(&SynthConfig { seed, ..sc.clone() })?, cfg.data.threshold(), cfg.data.core()),
        (None, Some(inp)) => Ok(inp.clone()),
        (None, None) => unreachable!("shared inputs are loaded when no synth config is given"),
    }
}

fn shared_inputs(cfg: &RunConfig) -> Result<Option<Inputs>> {
    if cfg.synth.is_some() {
        Ok(None)
    } else {
        load_inputs(cfg, false).map(Some)
    }
}

fn ctr_kind(cfg: &RunConfig) -> Result<CtrKind> {
    cfg.model
        .kind
        .ctr()
        .ok_or_else(|| PipelineError::Config(format!("model.kind: {} is not a CTR model", cfg.model.kind.name())))
}

/// Tokens for every distinct `k` among the modals, fitted on the split's
/// training items.
fn tokens_for(
    cfg: &RunConfig,
    inputs: &Inputs,
    split: &Split,
    modals: &[ModalSpec],
    seed: u64,
) -> Result<BTreeMap<usize, TokenTable>> {
    let mut out = BTreeMap::new();
    for m in modals {
        if let ModalSpec::MuqToken { k } = *m {
            if !out.contains_key(&k) {
                let (_, t) = fit_tokens(inputs, split.train(), k, seed, &cfg.tokenize)?;
                out.insert(k, t);
            }
        }
    }
    Ok(out)
}

fn token_ref(tokens: &BTreeMap<usize, TokenTable>, modal: ModalSpec) -> Option<&TokenTable> {
    match modal {
        ModalSpec::MuqToken { k } => tokens.get(&k),
        _ => None,
    }
}

fn schema_opts(cfg: &RunConfig, modal: ModalSpec) -> SchemaOptions {
    SchemaOptions { modal, ..cfg.features }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub baseline: BTreeMap<String, MetricReport>,
    pub variant: BTreeMap<String, MetricReport>,
    pub baseline_val_auc: Option<f64>,
    pub variant_val_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub baseline_auc: f64,
    pub variant_auc: f64,
    pub baseline_logloss: f64,
    pub variant_logloss: f64,
    pub auc_test: PairedTTest,
    pub logloss_test: PairedTTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model: String,
    pub runs: Vec<SeedComparison>,
    pub summary: Vec<SplitSummary>,
}

impl ModelComparison {
    pub fn split(&self, name: &str) -> Option<&SplitSummary> {
        self.summary.iter().find(|s| s.split == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdstartReport {
    pub baseline: ModalSpec,
    pub variant: ModalSpec,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelComparison>,
}

impl ColdstartReport {
    pub fn model(&self, name: &str) -> Option<&ModelComparison> {
        self.models.iter().find(|m| m.model == name)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn summarize(split: &str, runs: &[SeedComparison]) -> Result<SplitSummary> {
    let get = |side: fn(&SeedComparison) -> &BTreeMap<String, MetricReport>, f: fn(&MetricReport) -> Option<f64>| -> Vec<f64> {
        runs.iter().map(|r| side(r).get(split).and_then(f).unwrap_or(f64::NAN)).collect()
    };
    let (ba, va) = (get(|r| &r.baseline, |m| m.auc), get(|r| &r.variant, |m| m.auc));
    let (bl, vl) = (get(|r| &r.baseline, |m| m.logloss), get(|r| &r.variant, |m| m.logloss));
    Ok(SplitSummary {
        split: split.into(),
        baseline_auc: mean(&ba),
        variant_auc: mean(&va),
        baseline_logloss: mean(&bl),
        variant_logloss: mean(&vl),
        auc_test: paired_t_test(&ba, &va)?,
        logloss_test: paired_t_test(&bl, &vl)?,
    })
}

/// Rows `model,variant,split,auc_pct,logloss_pct,auc_p_value` of seed means.
pub fn coldstart_csv(report: &ColdstartReport) -> String {
    let mut out = String::from("model,variant,split,auc_pct,logloss_pct,auc_p_value\n");
    for m in &report.models {
        for s in &m.summary {
            for (label, auc, ll) in [
                (modal_label(&report.baseline), s.baseline_auc, s.baseline_logloss),
                (modal_label(&report.variant), s.variant_auc, s.variant_logloss),
            ] {
                out.push_str(&format!(
                    "{},{label},{},{:.4},{:.4},{:.6}\n",
                    m.model,
                    s.split,
                    100.0 * auc,
                    100.0 * ll,
                    s.auc_test.p_value
                ));
            }
        }
    }
    out
}

/// Cold-start protocol per seed for every configured model: baseline and
/// variant on the same split, then paired t-tests across seeds.
pub fn cmd_coldstart(cfg: &RunConfig) -> Result<(ColdstartReport, Manifest)> {
    cfg.validate()?;
    if cfg.seeds.len() < 2 {
        return Err(PipelineError::TTestRequiresReplicates(cfg.seeds.len()));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    let shared = shared_inputs(cfg)?;
    let split_cfg = SplitConfig {
        kind: SplitKind::Cold,
        ..cfg.split
    };
    let cs = &cfg.coldstart;
    let per_seed: Vec<Vec<SeedComparison>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<SeedComparison>> {
            let inputs = inputs_for_seed(cfg, seed, shared.as_ref())?;
            let split = make_split(&inputs.dataset.pairs, &split_cfg, seed)?;
            let tokens = tokens_for(cfg, &inputs, &split, &[cs.baseline, cs.variant], seed)?;
            cs.models
                .iter()
                .map(|mk| {
                    let kind = mk.ctr().expect("validated");
                    let mut sides = Vec::new();
                    for modal in [cs.baseline, cs.variant] {
                        let run = fit_ctr(
                            &inputs,
                            &split,
                            &schema_opts(cfg, modal),
                            kind,
                            &cfg.model.hyper,
                            &cfg.train,
                            token_ref(&tokens, modal),
                            seed,
                        )?;
                        let mut reports = BTreeMap::new();
                        for (name, pairs) in split.eval_sets() {
                            reports.insert(name.to_string(), eval_ctr(&run.model, &run.encoder, &pairs)?);
                        }
                        log::info!("coldstart seed {seed} {} {}: {:?}", kind.name(), modal_label(&modal), reports.get("cold_test").and_then(|r| r.auc));
                        sides.push((reports, run.report.best_metric));
                    }
                    let (variant, variant_val) = sides.pop().expect("two sides");
                    let (baseline, baseline_val) = sides.pop().expect("two sides");
                    Ok(SeedComparison {
                        seed,
                        baseline,
                        variant,
                        baseline_val_auc: baseline_val,
                        variant_val_auc: variant_val,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut models = Vec::new();
    for (mi, mk) in cs.models.iter().enumerate() {
        let runs: Vec<SeedComparison> = per_seed.iter().map(|s| s[mi].clone()).collect();
        let summary = ["test", "cold_test", "warm_test"]
            .iter()
            .map(|s| summarize(s, &runs))
            .collect::<Result<_>>()?;
        models.push(ModelComparison {
            model: mk.name().into(),
            runs,
            summary,
        });
    }
    let report = ColdstartReport {
        baseline: cs.baseline,
        variant: cs.variant,
        seeds: cfg.seeds.clone(),
        models,
    };
    write_json(&cfg.out_dir.join("coldstart.json"), &report)?;
    write_text(&cfg.out_dir.join("coldstart.csv"), &coldstart_csv(&report))?;
    let mut m = Manifest::new(Command::Coldstart, cfg);
    if let Some(inp) = &shared {
        for f in &inp.files {
            m.add_input(f)?;
        }
    }
    m.add_output("coldstart.json")?;
    m.add_output("coldstart.csv")?;
    m.write()?;
    Ok((report, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub k: usize,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub rows: Vec<SweepRow>,
    /// Seed → `k` with the highest validation AUC (first on ties).
    pub argmax: BTreeMap<u64, usize>,
    pub mean_val_auc: BTreeMap<usize, f64>,
}

impl SweepReport {
    /// Per-seed rows, then one `mean` row per `k`.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("seed,k,val_auc,test_auc\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.seed, r.k, f(r.val_auc), f(r.test_auc)));
        }
        for (k, v) in &self.mean_val_auc {
            let tests: Vec<f64> = self.rows.iter().filter(|r| r.k == *k).filter_map(|r| r.test_auc).collect();
            let t = (!tests.is_empty()).then(|| mean(&tests));
            out.push_str(&format!("mean,{k},{v:.6},{}\n", f(t)));
        }
        out
    }
}

/// Tokenize, train and evaluate once per `(seed, k)`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(SweepReport, Manifest)> {
    cfg.validate()?;
    let kind = ctr_kind(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    let shared = shared_inputs(cfg)?;
    let per_seed: Vec<Vec<SweepRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<SweepRow>> {
            let inputs = inputs_for_seed(cfg, seed, shared.as_ref())?;
            let split = make_split(&inputs.dataset.pairs, &cfg.split, seed)?;
            let test: Vec<LabeledPair> = split.eval_sets().swap_remove(0).1;
            cfg.sweep
                .k_list
                .iter()
                .map(|&k| {
                    let (_, tokens) = fit_tokens(&inputs, split.train(), k, seed, &cfg.tokenize)?;
                    let modal = ModalSpec::MuqToken { k };
                    let run = fit_ctr(&inputs, &split, &schema_opts(cfg, modal), kind, &cfg.model.hyper, &cfg.train, Some(&tokens), seed)?;
                    let test_auc = eval_ctr(&run.model, &run.encoder, &test)?.auc;
                    log::info!("sweep seed {seed} k {k}: val {:?} test {test_auc:?}", run.report.best_metric);
                    Ok(SweepRow {
                        seed,
                        k,
                        val_auc: run.report.best_metric,
                        test_auc,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = per_seed.into_iter().flatten().collect();
    let mut argmax = BTreeMap::new();
    for &seed in &cfg.seeds {
        let mut best: Option<(f64, usize)> = None;
        for r in rows.iter().filter(|r| r.seed == seed) {
            if let Some(v) = r.val_auc {
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, r.k));
                }
            }
        }
        if let Some((_, k)) = best {
            argmax.insert(seed, k);
        }
    }
    let mut mean_val_auc = BTreeMap::new();
    for &k in &cfg.sweep.k_list {
        let vals: Vec<f64> = rows.iter().filter(|r| r.k == k).filter_map(|r| r.val_auc).collect();
        if !vals.is_empty() {
            mean_val_auc.insert(k, mean(&vals));
        }
    }
    let report = SweepReport {
        model: kind.name().into(),
        rows,
        argmax,
        mean_val_auc,
    };
    write_json(&cfg.out_dir.join("sweep.json"), &report)?;
    write_text(&cfg.out_dir.join("sweep.csv"), &report.to_csv())?;
    let mut m = Manifest::new(Command::Sweep, cfg);
    if let Some(inp) = &shared {
        for f in &inp.files {
            m.add_input(f)?;
        }
    }
    m.add_output("sweep.json")?;
    m.add_output("sweep.csv")?;
    m.write()?;
    Ok((report, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRun {
    pub seed: u64,
    pub baseline: PopularityHistogram,
    pub variant: PopularityHistogram,
    /// Recommendations with train popularity below this fall in the bottom quartile.
    pub tail_threshold: f64,
    pub baseline_tail_mass: f64,
    pub variant_tail_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub model: String,
    pub baseline: ModalSpec,
    pub variant: ModalSpec,
    pub top_k: usize,
    pub runs: Vec<DiversityRun>,
}

impl DiversityReport {
    /// Rows `seed,model,bin,lower,upper,frequency`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,model,bin,lower,upper,frequency\n");
        for r in &self.runs {
            for (label, h) in [(modal_label(&self.baseline), &r.baseline), (modal_label(&self.variant), &r.variant)] {
                for (b, f) in h.frequencies.iter().enumerate() {
                    out.push_str(&format!("{},{label},{b},{},{},{f:.6}\n", r.seed, h.edges[b], h.edges[b + 1]));
                }
            }
        }
        out
    }
}

/// Top-`k` items per user among items outside the user's training history.
pub fn recommend_ctr(
    model: &CtrModel,
    encoder: &Encoder,
    users: &[u32],
    history: &[HashSet<u32>],
    n_items: usize,
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    let items: Vec<u32> = (0..n_items as u32).collect();
    users
        .par_iter()
        .map(|&u| {
            let batch = encoder.batch_for(&vec![u; n_items], &items, vec![0.0; n_items]);
            let scores = model.predict_logits(&batch)?;
            Ok(rank_items(&scores, &history[u as usize], k).items)
        })
        .collect()
}

fn tail_mass(recs: &[Vec<u32>], popularity: &[u64], threshold: f64) -> f64 {
    let total: usize = recs.iter().map(Vec::len).sum();
    let tail = recs.iter().flatten().filter(|&&i| (popularity[i as usize] as f64) < threshold).count();
    tail as f64 / total.max(1) as f64
}

fn sample_users(train: &[LabeledPair], count: Option<usize>, seed: u64) -> Vec<u32> {
    let mut active: Vec<u32> = train.iter().map(|p| p.user).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if let Some(c) = count {
        if c < active.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<u32> = rand::seq::index::sample(&mut rng, active.len(), c).into_iter().map(|i| active[i]).collect();
            picked.sort_unstable();
            active = picked;
        }
    }
    active
}

fn trained_pair(
    cfg: &RunConfig,
    inputs: &mut Inputs,
    split: &Split,
    seed: u64,
) -> Result<[(CtrModel, Encoder); 2]> {
    let dv = &cfg.diversity;
    match (&dv.baseline_checkpoint, &dv.variant_checkpoint) {
        (Some(b), Some(v)) => {
            let mut load = |p: &std::path::Path| -> Result<(CtrModel, Encoder)> {
                match load_model(cfg, inputs, p)? {
                    (SavedModel::Ctr(m), Some(e)) => Ok((m, e)),
                    _ => Err(PipelineError::Config(format!("{}: diversity needs a CTR checkpoint", p.display()))),
                }
            };
            Ok([load(b)?, load(v)?])
        }
        (None, None) => {
            let kind = ctr_kind(cfg)?;
            let tokens = tokens_for(cfg, inputs, split, &[dv.baseline, dv.variant], seed)?;
            let fit = |modal: ModalSpec| -> Result<(CtrModel, Encoder)> {
                let run = fit_ctr(inputs, split, &schema_opts(cfg, modal), kind, &cfg.model.hyper, &cfg.train, token_ref(&tokens, modal), seed)?;
                Ok((run.model, run.encoder))
            };
            Ok([fit(dv.baseline)?, fit(dv.variant)?])
        }
        _ => Err(PipelineError::Config(
            "diversity.baseline_checkpoint and diversity.variant_checkpoint must be set together".into(),
        )),
    }
}

/// Popularity distribution of top-K recommendations for the baseline and
/// variant models, per seed.
pub fn cmd_diversity(cfg: &RunConfig) -> Result<(DiversityReport, Manifest)> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    let dv = &cfg.diversity;
    let from_ckpt = dv.baseline_checkpoint.is_some();
    if from_ckpt && cfg.seeds.len() != 1 {
        return Err(PipelineError::Config("checkpoint comparison runs on exactly one seed".into()));
    }
    let shared = if from_ckpt { Some(load_inputs(cfg, false)?) } else { shared_inputs(cfg)? };
    let results: Vec<(DiversityRun, Vec<std::path::PathBuf>, ModalSpec, ModalSpec)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut inputs = inputs_for_seed(cfg, seed, shared.as_ref())?;
            let split = make_split(&inputs.dataset.pairs, &cfg.split, seed)?;
            let [(bm, be), (vm, ve)] = trained_pair(cfg, &mut inputs, &split, seed)?;
            let ds = &inputs.dataset;
            let history = user_histories(split.train(), ds.n_users());
            let users = sample_users(split.train(), dv.users, seed);
            let popularity = item_popularity(split.train(), ds.n_items());
            let pop_f: Vec<f64> = popularity.iter().map(|&p| p as f64).collect();
            let edges = quantile_edges(&pop_f, dv.bins)?;
            let quartiles = quantile_edges(&pop_f, 4)?;
            let tail_threshold = quartiles.get(1).copied().unwrap_or(f64::INFINITY);
            let b_recs = recommend_ctr(&bm, &be, &users, &history, ds.n_items(), dv.top_k)?;
            let v_recs = recommend_ctr(&vm, &ve, &users, &history, ds.n_items(), dv.top_k)?;
            let run = DiversityRun {
                seed,
                baseline: popularity_histogram(&b_recs, &popularity, &edges)?,
                variant: popularity_histogram(&v_recs, &popularity, &edges)?,
                tail_threshold,
                baseline_tail_mass: tail_mass(&b_recs, &popularity, tail_threshold),
                variant_tail_mass: tail_mass(&v_recs, &popularity, tail_threshold),
            };
            log::info!("diversity seed {seed}: tail mass {:.4} vs {:.4}", run.baseline_tail_mass, run.variant_tail_mass);
            Ok((run, inputs.files.clone(), bm.schema().modal, vm.schema().modal))
        })
        .collect::<Result<_>>()?;
    let (baseline, variant) = results.first().map(|r| (r.2, r.3)).unwrap_or((dv.baseline, dv.variant));
    let model = if from_ckpt { "checkpoint".to_string() } else { ctr_kind(cfg)?.name().to_string() };
    let mut m = Manifest::new(Command::Diversity, cfg);
    for (_, files, _, _) in &results {
        for f in files {
            if f.exists() {
                m.add_input(f)?;
            }
        }
    }
    let report = DiversityReport {
        model,
        baseline,
        variant,
        top_k: dv.top_k,
        runs: results.into_iter().map(|r| r.0).collect(),
    };
    write_json(&cfg.out_dir.join("diversity.json"), &report)?;
    write_text(&cfg.out_dir.join("diversity.csv"), &report.to_csv())?;
    m.add_output("diversity.json")?;
    m.add_output("diversity.csv")?;
    m.write()?;
    Ok((report, m))
}
