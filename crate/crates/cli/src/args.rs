use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rcd_core::decode::{AlphaStrategy, DecodeMode, WarmStart};

use crate::config::DataTask;

#[derive(Debug, Parser)]
#[command(name = "rcd", version, about = "Residual context diffusion: data, training, decoding and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decoding loop, or the target objective for train-target.
    #[arg(long)]
    pub mode: Option<DecodeMode>,
    #[arg(long, conflicts_with = "top_m")]
    pub threshold: Option<f64>,
    #[arg(long = "top-m")]
    pub top_m: Option<usize>,
    #[arg(long = "t-res")]
    pub t_res: Option<f64>,
    /// entropy, linear:c, confidence, inverse-entropy or inverse-confidence.
    #[arg(long)]
    pub alpha: Option<AlphaStrategy>,
    #[arg(long = "warm-start")]
    pub warm_start: Option<WarmStart>,
    #[arg(long = "block-size")]
    pub block_size: Option<usize>,
    #[arg(long = "max-steps")]
    pub max_steps: Option<usize>,
    /// Commit sampling temperature; 0 is greedy.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training set and a held-out set.
    Gen {
        #[arg(long)]
        task: Option<DataTask>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        holdout: Option<usize>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Train the reference model with the plain masked objective.
    TrainRef {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Train a target model: residual-aware (rcd) or plain (seqd).
    TrainTarget {
        #[arg(long)]
        data: PathBuf,
        /// Frozen reference checkpoint, required for --mode rcd.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Decode the prompts of a dataset file.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        prompts: PathBuf,
        /// Blocks per prompt; by default enough to cover the longest
        /// completion in the file.
        #[arg(long = "num-blocks")]
        num_blocks: Option<usize>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Accuracy and tokens per step over a grid of confidence thresholds.
    Sweep {
        #[arg(long)]
        seqd: PathBuf,
        #[arg(long)]
        rcd: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        task: PathBuf,
        /// Comma-separated; defaults to 0.5,0.6,...,1.0.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Residual-loop accuracy under several residual-weight strategies.
    AblateAlpha {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        task: PathBuf,
        /// Comma-separated; defaults to all five strategies with linear:0.5.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<AlphaStrategy>>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Recall of final tokens in each step's top-k candidates.
    Recall {
        #[arg(long)]
        trace: PathBuf,
        /// generations.dat written by decode.
        #[arg(long)]
        generations: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        k: Vec<usize>,
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value = "rcd-out")]
        out: PathBuf,
    },
    /// Re-run a command from its manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
        /// Where to write the rerun; defaults to `replay/` beside the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
