use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::dataio::{SplitRatios, DEFAULT_CORE, DEFAULT_THRESHOLD};
use crate::features::{ModalSpec, SchemaOptions};
use crate::models::{CtrKind, ModelHyper, RecallKind, VbprInput};
use crate::muqtoken::KMeansOptions;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

/// Every model the pipeline can train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Fm,
    Ffm,
    Afm,
    WideDeep,
    Deepfm,
    Dcnv2,
    Bpr,
    Vbpr,
}

impl ModelKind {
    pub fn ctr(self) -> Option<CtrKind> {
        Some(match self {
            ModelKind::Lr => CtrKind::Lr,
            ModelKind::Fm => CtrKind::Fm,
            ModelKind::Ffm => CtrKind::Ffm,
            ModelKind::Afm => CtrKind::Afm,
            ModelKind::WideDeep => CtrKind::WideDeep,
            ModelKind::Deepfm => CtrKind::DeepFm,
            ModelKind::Dcnv2 => CtrKind::Dcnv2,
            ModelKind::Bpr | ModelKind::Vbpr => return None,
        })
    }

    pub fn recall(self) -> Option<RecallKind> {
        match self {
            ModelKind::Bpr => Some(RecallKind::Bpr),
            ModelKind::Vbpr => Some(RecallKind::Vbpr),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.ctr(), self.recall()) {
            (Some(c), _) => c.name(),
            (_, Some(r)) => r.name(),
            _ => unreachable!("every kind is ctr or recall"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Interaction TSV; defaults to the synth output under the run directory.
    pub events: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub threshold: Option<u32>,
    pub core: Option<u32>,
}

impl DataConfig {
    pub fn threshold(&self) -> u32 {
        self.threshold.unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn core(&self) -> u32 {
        self.core.unwrap_or(DEFAULT_CORE as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hyper: ModelHyper,
    pub vbpr_input: VbprInput,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Fm,
            hyper: ModelHyper::default(),
            vbpr_input: VbprInput::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    #[default]
    Random,
    Cold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub cold_fraction: f64,
    pub ratios: SplitRatios,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            kind: SplitKind::Random,
            cold_fraction: 0.2,
            ratios: SplitRatios::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizeConfig {
    /// Cluster count; a `muq_token` modal overrides it.
    pub k: usize,
    pub kmeans: KMeansOptions,
    pub z_score: bool,
    /// Fit codebooks on training-split items only.
    pub fit_on_train: bool,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self {
            k: 16,
            kmeans: KMeansOptions::default(),
            z_score: false,
            fit_on_train: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: vec![10, 20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColdstartConfig {
    pub models: Vec<ModelKind>,
    pub baseline: ModalSpec,
    pub variant: ModalSpec,
}

impl Default for ColdstartConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Fm, ModelKind::Dcnv2],
            baseline: ModalSpec::None,
            variant: ModalSpec::MuqToken { k: 16 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k_list: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_list: vec![4, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversityConfig {
    pub baseline: ModalSpec,
    pub variant: ModalSpec,
    pub top_k: usize,
    pub bins: usize,
    /// Users sampled per seed; `None` scores every user.
    pub users: Option<usize>,
    /// Pre-trained checkpoints to compare instead of training both models.
    pub baseline_checkpoint: Option<PathBuf>,
    pub variant_checkpoint: Option<PathBuf>,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            baseline: ModalSpec::None,
            variant: ModalSpec::MuqToken { k: 16 },
            top_k: 10,
            bins: 10,
            users: Some(200),
            baseline_checkpoint: None,
            variant_checkpoint: None,
        }
    }
}

/// One JSON document drives every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub synth: Option<SynthConfig>,
    pub data: DataConfig,
    pub features: SchemaOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub tokenize: TokenizeConfig,
    pub eval: EvalConfig,
    pub coldstart: ColdstartConfig,
    pub sweep: SweepConfig,
    pub diversity: DiversityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("taste-run"),
            seeds: vec![0],
            synth: None,
            data: DataConfig::default(),
            features: SchemaOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            tokenize: TokenizeConfig::default(),
            eval: EvalConfig::default(),
            coldstart: ColdstartConfig::default(),
            sweep: SweepConfig::default(),
            diversity: DiversityConfig::default(),
        }
    }
}

impl RunConfig {
    /// Applies `--seed` and `--out` overrides. A seed override also reseeds
    /// the synthetic generator.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seeds = vec![s];
            if let Some(sc) = self.synth.as_mut() {
                sc.seed = s;
            }
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
        self
    }

    /// The seed used by single-run commands.
    pub fn seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    /// Codebook size: the token modal's `k` when set, else `tokenize.k`.
    pub fn token_k(&self) -> usize {
        match self.features.modal {
            ModalSpec::MuqToken { k } => k,
            _ => self.tokenize.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        if let Some(sc) = &self.synth {
            sc.validate()?;
        }
        self.train.validate()?;
        self.split.ratios.validate()?;
        if self.split.kind == SplitKind::Cold && !(self.split.cold_fraction > 0.0 && self.split.cold_fraction < 1.0) {
            return bad(format!("split.cold_fraction must lie in (0, 1), got {}", self.split.cold_fraction));
        }
        if self.tokenize.k == 0 || self.token_k() == 0 {
            return bad("tokenize.k must be >= 1".into());
        }
        for (name, m) in [
            ("features.modal", self.features.modal),
            ("coldstart.baseline", self.coldstart.baseline),
            ("coldstart.variant", self.coldstart.variant),
            ("diversity.baseline", self.diversity.baseline),
            ("diversity.variant", self.diversity.variant),
        ] {
            if m == (ModalSpec::MuqToken { k: 0 }) {
                return bad(format!("{name}: k must be >= 1"));
            }
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must be a non-empty list of positive cutoffs".into());
        }
        if self.sweep.k_list.is_empty() || self.sweep.k_list.contains(&0) {
            return bad("sweep.k_list must be a non-empty list of positive cluster counts".into());
        }
        if self.coldstart.models.is_empty() {
            return bad("coldstart.models must not be empty".into());
        }
        if let Some(m) = self.coldstart.models.iter().find(|m| m.ctr().is_none()) {
            return bad(format!("coldstart.models: {} is not a CTR model", m.name()));
        }
        if self.diversity.top_k == 0 || self.diversity.bins == 0 || self.diversity.users == Some(0) {
            return bad("diversity.top_k, diversity.bins and diversity.users must be positive".into());
        }
        if self.model.kind == ModelKind::Vbpr && self.features.modal != ModalSpec::None {
            return bad("features.modal applies to CTR models; VBPR reads embeddings through model.vbpr_input".into());
        }
        Ok(())
    }
}

/// Parses a config with path-precise errors for unknown or mistyped fields.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        PipelineError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_config(&text)
}
