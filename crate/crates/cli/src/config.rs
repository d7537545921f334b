use std::path::Path;

use rcd_core::data::StringTask;
use rcd_core::decode::{DecodeConfig, Selection};
use rcd_core::train::TrainConfig;
use rcd_core::ModelDims;
use serde::{Deserialize, Serialize};

use crate::args::Overrides;
use crate::error::{CliError, CliResult};

/// Model shape without the vocabulary, which comes from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelDims::default();
        Self { dim: d.dim, layers: d.layers, heads: d.heads, ff: d.ff, max_len: d.max_len }
    }
}

impl ModelShape {
    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims { vocab, dim: self.dim, layers: self.layers, heads: self.heads, ff: self.ff, max_len: self.max_len }
    }

    /// Half the width of `self`, same depth.
    pub fn half_width(&self) -> Self {
        let heads = (self.heads / 2).max(1);
        Self { dim: (self.dim / 2).max(heads), heads, ff: (self.ff / 2).max(1), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataTask {
    Addition,
    Markov,
    Strings,
}

impl std::str::FromStr for DataTask {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "addition" => Ok(DataTask::Addition),
            "markov" => Ok(DataTask::Markov),
            "strings" => Ok(DataTask::Strings),
            _ => Err(CliError::InvalidArgument(format!("unknown task '{s}' (expected addition, markov or strings)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub task: DataTask,
    pub count: usize,
    pub holdout: usize,
    pub min_digits: u32,
    pub max_digits: u32,
    pub cot: bool,
    pub states: usize,
    pub concentration: f64,
    pub block_len: usize,
    pub string_tasks: Vec<StringTask>,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            task: DataTask::Addition,
            count: 10_000,
            holdout: 200,
            min_digits: 3,
            max_digits: 3,
            cot: false,
            states: 3,
            concentration: 1.0,
            block_len: 8,
            string_tasks: vec![StringTask::Copy, StringTask::Reverse],
            min_len: 2,
            max_len: 6,
        }
    }
}

/// Everything a command needs, resolved from defaults, an optional TOML file
/// and command-line flags, in increasing precedence. The single `seed`
/// overrides the seeds of the sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelShape,
    /// Shape of the reference model; half the target width when absent.
    pub reference_model: Option<ModelShape>,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn reference_shape(&self) -> ModelShape {
        self.reference_model.unwrap_or_else(|| self.model.half_width())
    }

    /// Defaults, then the `--config` file, then flags.
    pub fn resolve(flags: &Overrides) -> CliResult<Self> {
        let mut cfg = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.train.seed = cfg.seed;
        cfg.decode.seed = cfg.seed;
        cfg.train.validate()?;
        cfg.decode.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides) {
        if let Some(s) = f.seed {
            self.seed = s;
        }
        if let Some(m) = f.mode {
            self.decode.mode = m;
        }
        if let Some(t) = f.threshold {
            self.decode.selection = Selection::Threshold(t);
        }
        if let Some(m) = f.top_m {
            self.decode.selection = Selection::TopM(m);
        }
        if let Some(t) = f.t_res {
            self.decode.t_res = t;
        }
        if let Some(a) = f.alpha {
            self.decode.alpha_strategy = a;
        }
        if let Some(w) = f.warm_start {
            self.decode.warm_start = w;
        }
        if let Some(b) = f.block_size {
            self.decode.block_size = b;
            self.train.block_size = b;
        }
        if let Some(k) = f.max_steps {
            self.decode.max_steps = Some(k);
        }
        if let Some(t) = f.temperature {
            self.decode.sampling_temperature = t;
        }
        if let Some(e) = f.epochs {
            self.train.epochs = e;
        }
        if let Some(lr) = f.lr {
            self.train.learning_rate = lr;
        }
        if let Some(b) = f.batch_size {
            self.train.batch_size = b;
        }
    }
}
