use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rcd_core::data::{gen_addition_corpus, gen_markov_corpus, gen_string_corpus, Dataset, MarkovSpec};
use rcd_core::decode::{decode_sequence, read_trace, write_trace, AlphaStrategy, DecodeConfig, DecodeMode, StepRecord};
use rcd_core::eval::{
    ablate_alpha, default_thresholds, pareto_sweep, recall_at_k_multi, write_ablation_csv, write_pareto_csv,
    write_recall_csv, ParetoPoint, TaskSet, Variant,
};
use rcd_core::model::{load_checkpoint, save_checkpoint};
use rcd_core::train::{train_reference, train_seqd, train_target_rcd, write_train_log, TrainOutcome};
use rcd_core::DenoiserParams;
use serde::Serialize;

use crate::config::{DataTask, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Invocation;

/// Threshold at which the sweep summary reports throughput.
pub const SUMMARY_THRESHOLD: f64 = 0.85;

fn require(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn load_params(path: &Path) -> CliResult<DenoiserParams> {
    require(path)?;
    Ok(load_checkpoint(path)?)
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    require(path)?;
    Ok(Dataset::load(path)?)
}

fn load_optional(path: &Option<PathBuf>) -> CliResult<Option<DenoiserParams>> {
    path.as_deref().map(load_params).transpose()
}

fn check_vocab(params: &DenoiserParams, data: &Dataset, what: &str) -> CliResult<()> {
    if params.dims.vocab != data.header.vocab {
        return Err(CliError::DimensionMismatch(format!(
            "{what} has vocab {}, data has {}",
            params.dims.vocab, data.header.vocab
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Every input must exist before any work starts.
pub fn check_inputs(inv: &Invocation) -> CliResult<()> {
    inv.inputs().into_iter().try_for_each(|(_, p)| require(p))
}

/// Runs `inv` under `cfg`, writing into `out` (created if needed). Returns the
/// names of the files written, relative to `out`.
pub fn execute(inv: &Invocation, cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    check_inputs(inv)?;
    fs::create_dir_all(out)?;
    match inv {
        Invocation::Gen => gen(cfg, out),
        Invocation::TrainRef { data } => {
            let data = load_data(data)?;
            let dims = cfg.reference_shape().dims(data.header.vocab);
            let outcome = train_reference(&data, &cfg.train, dims)?;
            save_training(&outcome, out, "reference.ckpt")
        }
        Invocation::TrainTarget { data, reference } => {
            let data = load_data(data)?;
            let dims = cfg.model.dims(data.header.vocab);
            let outcome = match cfg.decode.mode {
                DecodeMode::Rcd => {
                    let Some(reference) = load_optional(reference)? else {
                        return Err(CliError::InvalidArgument("rcd training needs --reference".into()));
                    };
                    check_vocab(&reference, &data, "reference")?;
                    train_target_rcd(&reference, &data, &cfg.train, dims)?
                }
                DecodeMode::Seqd => train_seqd(&data, &cfg.train, dims)?,
            };
            save_training(&outcome, out, "target.ckpt")
        }
        Invocation::Decode { checkpoint, reference, prompts, num_blocks } => {
            decode(checkpoint, reference, prompts, *num_blocks, &cfg.decode, out)
        }
        Invocation::Sweep { seqd, rcd, reference, task, thresholds } => {
            sweep(seqd, rcd, reference, task, thresholds, &cfg.decode, out)
        }
        Invocation::AblateAlpha { checkpoint, reference, task, strategies } => {
            let params = load_params(checkpoint)?;
            let reference = load_optional(reference)?;
            let data = load_data(task)?;
            check_vocab(&params, &data, "checkpoint")?;
            let task = TaskSet::from_dataset(&data)?;
            let strategies = strategies
                .iter()
                .map(|s| s.parse::<AlphaStrategy>().map_err(|e| CliError::InvalidArgument(e.to_string())))
                .collect::<CliResult<Vec<_>>>()?;
            let rows = ablate_alpha(&params, reference.as_ref(), &task, &strategies, &cfg.decode)?;
            write_ablation_csv(&out.join("ablation.csv"), &rows)?;
            Ok(vec!["ablation.csv".into()])
        }
        Invocation::Recall { trace, generations, k } => {
            require(trace)?;
            let records = read_trace(std::io::BufReader::new(fs::File::open(trace)?))?;
            let finals = load_data(generations)?.records;
            let curves = k
                .iter()
                .map(|&k| recall_at_k_multi(&records, &finals, k))
                .collect::<rcd_core::Result<Vec<_>>>()?;
            write_recall_csv(&out.join("recall.csv"), &curves)?;
            Ok(vec!["recall.csv".into()])
        }
    }
}

fn gen(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let d = &cfg.data;
    let total = d.count + d.holdout;
    let (data, spec) = match d.task {
        DataTask::Addition => (gen_addition_corpus(d.min_digits, d.max_digits, total, d.cot, cfg.seed)?, None),
        DataTask::Strings => (gen_string_corpus(&d.string_tasks, d.min_len, d.max_len, total, cfg.seed)?, None),
        DataTask::Markov => {
            let spec = MarkovSpec::random(d.states, d.concentration, cfg.seed)?;
            (gen_markov_corpus(&spec, total, d.block_len)?, Some(spec))
        }
    };
    let (train, heldout) = data.split_holdout(d.holdout);
    let mut files = Vec::new();
    for (name, set) in [("train.txt", &train), ("heldout.txt", &heldout)] {
        let path = out.join(name);
        set.save(&path)?;
        files.push(name.to_string());
        if let Some(spec) = &spec {
            let side = MarkovSpec::sidecar_path(&path);
            spec.save(&side)?;
            files.push(side.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    Ok(files)
}

fn save_training(outcome: &TrainOutcome, out: &Path, name: &str) -> CliResult<Vec<String>> {
    save_checkpoint(&outcome.params, &out.join(name))?;
    let log = out.join("train_log.csv");
    if log.exists() {
        fs::remove_file(&log)?;
    }
    write_train_log(&log, &outcome.log)?;
    Ok(vec![name.to_string(), "train_log.csv".into()])
}

fn decode(
    checkpoint: &Path,
    reference: &Option<PathBuf>,
    prompts: &Path,
    num_blocks: Option<usize>,
    config: &DecodeConfig,
    out: &Path,
) -> CliResult<Vec<String>> {
    let params = load_params(checkpoint)?;
    let reference = load_optional(reference)?;
    let data = load_data(prompts)?;
    check_vocab(&params, &data, "checkpoint")?;
    if let Some(r) = &reference {
        check_vocab(r, &data, "reference")?;
    }
    let tokenizer = data.tokenizer()?;
    let b = config.block_size;
    let num_blocks = num_blocks.unwrap_or_else(|| {
        let longest = data.records.iter().map(|r| r.len() - data.prompt_len(r)).max().unwrap_or(0);
        longest.div_ceil(b).max(1)
    });

    let runs = data
        .records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let prompt = &rec[..data.prompt_len(rec)];
            let cfg = DecodeConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
            decode_sequence(&params, reference.as_ref(), prompt, num_blocks, &cfg)
        })
        .collect::<rcd_core::Result<Vec<_>>>()?;

    let mut text = String::new();
    let mut trace: Vec<StepRecord> = Vec::new();
    let mut finals = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        text.push_str(&tokenizer.decode(&run.tokens)?);
        text.push('\n');
        trace.extend(run.trace.into_iter().map(|r| StepRecord { seq: i, ..r }));
        finals.push(run.tokens);
    }
    fs::write(out.join("generations.txt"), text)?;
    Dataset { header: data.header.clone(), records: finals }.save(&out.join("generations.dat"))?;
    let mut w = std::io::BufWriter::new(fs::File::create(out.join("trace.jsonl"))?);
    write_trace(&mut w, &trace)?;
    std::io::Write::flush(&mut w)?;
    Ok(vec!["generations.txt".into(), "generations.dat".into(), "trace.jsonl".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub rcd_tokens_per_step: Option<f64>,
    pub seqd_tokens_per_step: Option<f64>,
    pub rcd_accuracy: Option<f64>,
    pub seqd_accuracy: Option<f64>,
    /// "rcd", "seqd" or "neither".
    pub dominates: String,
}

fn at_summary_threshold<'a>(set: &[&'a ParetoPoint]) -> Option<&'a ParetoPoint> {
    set.iter().find(|p| (p.threshold - SUMMARY_THRESHOLD).abs() < 1e-9).copied()
}

fn frontier_covers(a: &[&ParetoPoint], b: &[&ParetoPoint]) -> bool {
    b.iter().all(|q| a.iter().any(|p| p.accuracy >= q.accuracy && p.tokens_per_step >= q.tokens_per_step))
}

pub fn summarize_sweep(points: &[ParetoPoint]) -> SweepSummary {
    let of = |name: &str| points.iter().filter(|p| p.variant == name).collect::<Vec<_>>();
    let (rcd, seqd) = (of("rcd"), of("seqd"));
    let (r, s) = (at_summary_threshold(&rcd), at_summary_threshold(&seqd));
    let rcd_covers = frontier_covers(&rcd, &seqd);
    let seqd_covers = frontier_covers(&seqd, &rcd);
    let dominates = match (rcd_covers, seqd_covers) {
        (true, false) => "rcd",
        (false, true) => "seqd",
        _ => "neither",
    };
    SweepSummary {
        threshold: SUMMARY_THRESHOLD,
        rcd_tokens_per_step: r.map(|p| p.tokens_per_step),
        seqd_tokens_per_step: s.map(|p| p.tokens_per_step),
        rcd_accuracy: r.map(|p| p.accuracy),
        seqd_accuracy: s.map(|p| p.accuracy),
        dominates: dominates.into(),
    }
}

fn sweep(
    seqd: &Path,
    rcd: &Path,
    reference: &Option<PathBuf>,
    task: &Path,
    thresholds: &[f64],
    config: &DecodeConfig,
    out: &Path,
) -> CliResult<Vec<String>> {
    let seqd = load_params(seqd)?;
    let rcd = load_params(rcd)?;
    let reference = load_optional(reference)?;
    let data = load_data(task)?;
    check_vocab(&seqd, &data, "seqd checkpoint")?;
    check_vocab(&rcd, &data, "rcd checkpoint")?;
    let task = TaskSet::from_dataset(&data)?;
    let thresholds = if thresholds.is_empty() { default_thresholds() } else { thresholds.to_vec() };
    let variants = [
        Variant {
            name: "seqd".into(),
            params: &seqd,
            reference: None,
            config: DecodeConfig { mode: DecodeMode::Seqd, ..config.clone() },
        },
        Variant {
            name: "rcd".into(),
            params: &rcd,
            reference: reference.as_ref(),
            config: DecodeConfig { mode: DecodeMode::Rcd, ..config.clone() },
        },
    ];
    let points = pareto_sweep(&variants, &task, &thresholds)?;
    write_pareto_csv(&out.join("pareto.csv"), &points)?;
    let mut summary = summarize_sweep(&points);
    if summary.rcd_tokens_per_step.is_none() {
        let extra = pareto_sweep(&variants, &task, &[SUMMARY_THRESHOLD])?;
        let at = summarize_sweep(&extra);
        summary = SweepSummary { dominates: summary.dominates, ..at };
    }
    write_json(&out.join("pareto_summary.json"), &summary)?;
    Ok(vec!["pareto.csv".into(), "pareto_summary.json".into()])
}
