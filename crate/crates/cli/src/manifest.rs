use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// A fully resolved command: what ran and on which files. Together with the
/// resolved [`RunConfig`] this is enough to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Gen,
    TrainRef {
        data: PathBuf,
    },
    TrainTarget {
        data: PathBuf,
        reference: Option<PathBuf>,
    },
    Decode {
        checkpoint: PathBuf,
        reference: Option<PathBuf>,
        prompts: PathBuf,
        num_blocks: Option<usize>,
    },
    Sweep {
        seqd: PathBuf,
        rcd: PathBuf,
        reference: Option<PathBuf>,
        task: PathBuf,
        thresholds: Vec<f64>,
    },
    AblateAlpha {
        checkpoint: PathBuf,
        reference: Option<PathBuf>,
        task: PathBuf,
        strategies: Vec<String>,
    },
    Recall {
        trace: PathBuf,
        generations: PathBuf,
        k: Vec<usize>,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Gen => "gen",
            Invocation::TrainRef { .. } => "train-ref",
            Invocation::TrainTarget { .. } => "train-target",
            Invocation::Decode { .. } => "decode",
            Invocation::Sweep { .. } => "sweep",
            Invocation::AblateAlpha { .. } => "ablate-alpha",
            Invocation::Recall { .. } => "recall",
        }
    }

    /// Input files by role.
    pub fn inputs(&self) -> Vec<(&'static str, &Path)> {
        let reference = match self {
            Invocation::TrainTarget { reference, .. }
            | Invocation::Decode { reference, .. }
            | Invocation::Sweep { reference, .. }
            | Invocation::AblateAlpha { reference, .. } => reference.as_deref(),
            _ => None,
        };
        let mut v: Vec<(&'static str, &Path)> = reference.map(|p| ("reference", p)).into_iter().collect();
        match self {
            Invocation::Gen => {}
            Invocation::TrainRef { data } | Invocation::TrainTarget { data, .. } => v.push(("data", data)),
            Invocation::Decode { checkpoint, prompts, .. } => {
                v.push(("checkpoint", checkpoint));
                v.push(("prompts", prompts));
            }
            Invocation::Sweep { seqd, rcd, task, .. } => {
                v.push(("seqd", seqd));
                v.push(("rcd", rcd));
                v.push(("task", task));
            }
            Invocation::AblateAlpha { checkpoint, task, .. } => {
                v.push(("checkpoint", checkpoint));
                v.push(("task", task));
            }
            Invocation::Recall { trace, generations, .. } => {
                v.push(("trace", trace));
                v.push(("generations", generations));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Role for inputs, file name inside the output directory for outputs.
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
        _ => CliError::Io(e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Parse(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_NAME), text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| CliError::Parse(format!("manifest: {e}")))
    }
}
