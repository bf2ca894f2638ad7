//! Command orchestration: run configs, artifacts, manifests and the studies
//! built on top of the library modules.

mod config;
mod drift;
mod manifest;
mod prepare;
mod stages;
mod stats;
mod studies;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use config::{
    load_config, parse_config, ColdstartConfig, DataConfig, DiversityConfig, EvalConfig, ModelConfig, ModelKind, RunConfig,
    SplitConfig, SplitKind, SweepConfig, TokenizeConfig,
};
pub use drift::{cmd_drift, drift_report, month_of, monthly_profiles, normalize_columns, pca_2d, DriftReport, PeriodProfile, Projection, SideDrift};
pub use manifest::{bytes_digest, config_hash, file_digest, replay, Manifest, ReplayOutcome, MANIFEST_VERSION};
pub use prepare::{
    eval_ctr, eval_recall, fit_ctr, fit_recall, fit_tokens, load_inputs, make_split, modal_label, synth_inputs, CtrRun,
    Inputs, RecallRun, Split,
};
pub use stages::{cmd_eval, cmd_ingest, cmd_synth, cmd_tokenize, cmd_train, EvalReport, ArtifactPaths};
pub use stats::{paired_t_test, PairedTTest};
pub use studies::{
    cmd_coldstart, cmd_diversity, cmd_sweep, coldstart_csv, recommend_ctr, ColdstartReport, DiversityReport, DiversityRun, ModelComparison,
    SeedComparison, SplitSummary, SweepReport, SweepRow,
};

use crate::dataio::DataError;
use crate::features::FeatureError;
use crate::metrics::MetricError;
use crate::models::ModelError;
use crate::muqtoken::TokenError;
use crate::synth::SynthError;
use crate::tensor::TensorError;
use crate::train::TrainError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("paired t-test needs at least 2 seeds, got {0}")]
    TTestRequiresReplicates(usize),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::TTestRequiresReplicates(_) => EXIT_CONFIG,
            PipelineError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidRatios(_) | DataError::DegenerateColdFraction { .. } => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<TokenError> for PipelineError {
    fn from(e: TokenError) -> Self {
        match e {
            TokenError::NonFinite => PipelineError::Numerical(e.to_string()),
            TokenError::ZeroClusters => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(TensorError::NonFinite { .. }) => PipelineError::Numerical(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<MetricError> for PipelineError {
    fn from(e: MetricError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for PipelineError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. } => PipelineError::Numerical(e.to_string()),
            TrainError::InvalidConfig(m) => PipelineError::Config(m),
            TrainError::Model(m) => m.into(),
            TrainError::Metric(m) => m.into(),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Synth,
    Ingest,
    Tokenize,
    Train,
    Eval,
    Coldstart,
    Sweep,
    Diversity,
    Drift,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Synth,
        Command::Ingest,
        Command::Tokenize,
        Command::Train,
        Command::Eval,
        Command::Coldstart,
        Command::Sweep,
        Command::Diversity,
        Command::Drift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Tokenize => "tokenize",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Coldstart => "coldstart",
            Command::Sweep => "sweep",
            Command::Diversity => "diversity",
            Command::Drift => "drift",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Runs one command and writes its artifacts plus `<command>.manifest.json`.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Ingest => cmd_ingest(cfg),
        Command::Tokenize => cmd_tokenize(cfg),
        Command::Train => cmd_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Coldstart => cmd_coldstart(cfg).map(|(_, m)| m),
        Command::Sweep => cmd_sweep(cfg).map(|(_, m)| m),
        Command::Diversity => cmd_diversity(cfg).map(|(_, m)| m),
        Command::Drift => cmd_drift(cfg).map(|(_, m)| m),
    }
}

pub const THREADS_ENV: &str = "TASTE_THREADS";

/// Worker count from `TASTE_THREADS` (unset means all cores).
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(PipelineError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| PipelineError::Config(e.to_string()))
}
