use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run, Command, PipelineError, Result, RunConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// Provenance record written next to every command's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub command: Command,
    pub seed: u64,
    /// sha256 of the serialized config below.
    pub config_hash: String,
    pub config: RunConfig,
    /// Input path → content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to `config.out_dir`) → content digest.
    pub outputs: BTreeMap<String, String>,
}

/// Content digest in git blob style: sha256 over `blob <len>\0<bytes>`.
pub fn bytes_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(bytes_digest(&bytes))
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Manifest {
    pub fn new(command: Command, cfg: &RunConfig) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command,
            seed: cfg.seed(),
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn path_for(out_dir: &Path, command: Command) -> PathBuf {
        out_dir.join(format!("{}.manifest.json", command.name()))
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Digests `out_dir/rel`, which must already exist.
    pub fn add_output(&mut self, rel: &str) -> Result<()> {
        let digest = file_digest(&self.config.out_dir.join(rel))?;
        self.outputs.insert(rel.to_string(), digest);
        Ok(())
    }

    /// Writes `<out_dir>/<command>.manifest.json`.
    pub fn write(&self) -> Result<PathBuf> {
        let path = Self::path_for(&self.config.out_dir, self.command);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_slice(&raw);
        serde_path_to_error::deserialize(de)
            .map_err(|e| PipelineError::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
    }
}

/// What a replay found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub command: Command,
    /// Inputs whose current content differs from the recorded digest.
    pub changed_inputs: Vec<String>,
    /// Outputs the replay produced with different bytes.
    pub changed_outputs: Vec<String>,
}

impl ReplayOutcome {
    pub fn identical(&self) -> bool {
        self.changed_inputs.is_empty() && self.changed_outputs.is_empty()
    }
}

/// Re-runs the command recorded in a manifest with its stored config and
/// compares every output digest against the record.
pub fn replay(manifest_path: &Path) -> Result<ReplayOutcome> {
    let recorded = Manifest::load(manifest_path)?;
    if config_hash(&recorded.config) != recorded.config_hash {
        return Err(PipelineError::Config(format!(
            "{}: config hash does not match the stored config",
            manifest_path.display()
        )));
    }
    let mut changed_inputs = Vec::new();
    for (path, digest) in &recorded.inputs {
        match file_digest(Path::new(path)) {
            Ok(d) if &d == digest => {}
            _ => changed_inputs.push(path.clone()),
        }
    }
    let fresh = run(recorded.command, &recorded.config)?;
    let changed_outputs = recorded
        .outputs
        .iter()
        .filter(|(rel, digest)| fresh.outputs.get(*rel) != Some(digest))
        .map(|(rel, _)| rel.clone())
        .collect();
    Ok(ReplayOutcome {
        command: recorded.command,
        changed_inputs,
        changed_outputs,
    })
}
