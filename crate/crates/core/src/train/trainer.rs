use std::fs::OpenOptions;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PAD};
use crate::error::{invalid, RcdError, Result};
use crate::model::{
    backward, embed, embed_backward, embed_soft, forward, AttentionScheme, DenoiserParams, ModelDims,
    Slot, SoftResidual,
};
use crate::rng::{stream, substream};

use super::config::TrainConfig;
use super::corrupt::{corrupt, CorruptionSample};
use super::loss::masked_ce_loss_and_grad;
use super::optim::AdamW;
use super::residuals::reference_signal;

/// One training input: clean prefix followed by a corrupted block.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub slots: Vec<Slot>,
    pub scheme: AttentionScheme,
    pub sample: CorruptionSample,
    /// Residual distributions for every position of `slots` (prefix entries
    /// are `None`). Absent for plain masked-diffusion training.
    pub soft: Option<Vec<Option<SoftResidual>>>,
}

/// One optimizer step of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    pub log: Vec<TrainLogRow>,
}

/// Block start offsets of a record: the prompt end, then every `block` tokens.
fn block_starts(record_len: usize, prompt_len: usize, block: usize) -> impl Iterator<Item = usize> {
    (prompt_len..record_len).step_by(block)
}

/// Builds the example whose block covers `record[start..start + b]`
/// (padded with the pad token) at noise level `t`.
pub fn block_example<R: Rng + ?Sized>(
    record: &[u32],
    start: usize,
    block: usize,
    t: f64,
    rng: &mut R,
) -> Result<TrainExample> {
    if start > record.len() {
        return invalid(format!("block start {start} beyond record of length {}", record.len()));
    }
    let x0: Vec<u32> = (start..start + block).map(|i| record.get(i).copied().unwrap_or(PAD)).collect();
    let sample = corrupt(&x0, t, rng)?;
    let mut slots: Vec<Slot> = record[..start].iter().map(|&t| Slot::Token(t)).collect();
    slots.extend_from_slice(&sample.xt);
    Ok(TrainExample { slots, scheme: AttentionScheme::new(start, block), sample, soft: None })
}

impl TrainExample {
    /// Attaches the frozen reference's residual signal to the block.
    pub fn with_reference(mut self, reference: &DenoiserParams) -> Result<Self> {
        let block = reference_signal(reference, &self.slots, self.scheme)?;
        let mut soft = vec![None; self.scheme.committed_prefix_len];
        soft.extend(block);
        self.soft = Some(soft);
        Ok(self)
    }
}

/// Masked cross-entropy of `example` and its exact gradient, embedding
/// layer included.
pub fn loss_and_grad(params: &DenoiserParams, example: &TrainExample, t_min: f64) -> Result<(f64, DenoiserParams)> {
    let e = match &example.soft {
        Some(soft) => embed_soft(params, &example.slots, soft)?,
        None => embed(params, &example.slots, None)?,
    };
    let (logits, trace) = forward(params, &e, example.scheme)?;
    let (loss, d_logits) = masked_ce_loss_and_grad(&logits, params.dims.vocab, &example.sample, t_min)?;
    let (mut grads, d_emb) = backward(params, &trace, &d_logits)?;
    embed_backward(&mut grads, &example.slots, example.soft.as_deref(), &d_emb);
    Ok((loss, grads))
}

fn run_training(
    mut params: DenoiserParams,
    data: &Dataset,
    config: &TrainConfig,
    reference: Option<&DenoiserParams>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.header.vocab != params.dims.vocab {
        return Err(RcdError::DimensionMismatch(format!(
            "dataset vocab {} differs from model vocab {}",
            data.header.vocab, params.dims.vocab
        )));
    }
    if let Some(r) = reference {
        if r.dims.vocab != params.dims.vocab {
            return Err(RcdError::DimensionMismatch("reference and target vocabularies differ".into()));
        }
    }
    let b = config.block_size;
    let usable: Vec<usize> = (0..data.len())
        .filter(|&i| {
            let rec = &data.records[i];
            let p = data.prompt_len(rec);
            p < rec.len() && p + b <= params.dims.max_len
        })
        .collect();
    if usable.is_empty() {
        return invalid("dataset has no record with a block to train on");
    }
    let per_step = config.batch_size * config.grad_accum_steps;
    let steps_per_epoch = usable.len().div_ceil(per_step);
    let total_steps = steps_per_epoch * config.epochs;
    let warmup = ((config.warmup_ratio * total_steps as f64).ceil() as usize).max(1);

    let mut order_rng = substream(config.seed, "shuffle");
    let mut noise_rng = substream(config.seed, stream::CORRUPTION);
    let mut opt = AdamW::new(&params, config);
    let mut log = Vec::with_capacity(total_steps);
    let mut order = usable.clone();

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(per_step) {
            let step = opt.steps_taken() as usize;
            let examples = chunk
                .iter()
                .map(|&i| {
                    let rec = &data.records[i];
                    let starts: Vec<usize> = block_starts(rec.len(), data.prompt_len(rec), b)
                        .filter(|s| s + b <= params.dims.max_len)
                        .collect();
                    let start = starts[noise_rng.gen_range(0..starts.len())];
                    let t = 1.0 - noise_rng.gen::<f64>();
                    block_example(rec, start, b, t, &mut noise_rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let results = examples
                .into_par_iter()
                .map(|ex| {
                    let ex = match reference {
                        Some(r) => ex.with_reference(r)?,
                        None => ex,
                    };
                    loss_and_grad(&params, &ex, config.t_min)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = results.len() as f64;
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grads.add_assign(g);
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(RcdError::TrainingFailure { step, reason: format!("loss is {loss}") });
            }
            grads.scale(1.0 / n);
            let lr = config.learning_rate * ((step + 1) as f64 / warmup as f64).min(1.0);
            opt.update(&mut params, &grads, lr);
            if !params.all_finite() {
                return Err(RcdError::TrainingFailure { step, reason: "non-finite parameters".into() });
            }
            log.push(TrainLogRow { step, epoch, loss, lr, seed: config.seed });
        }
    }
    params.round_to_f32();
    Ok(TrainOutcome { params, log })
}

/// Plain masked-diffusion fine-tuning from a fresh initialization. The result
/// serves as the frozen reference of the residual pipeline.
pub fn train_reference(data: &Dataset, config: &TrainConfig, dims: ModelDims) -> Result<TrainOutcome> {
    run_training(DenoiserParams::init(dims, config.seed)?, data, config, None)
}

/// Sequential-denoising control: same objective as the reference, no
/// residuals. Separate name because it is trained at target size.
pub fn train_seqd(data: &Dataset, config: &TrainConfig, dims: ModelDims) -> Result<TrainOutcome> {
    run_training(DenoiserParams::init(dims, config.seed)?, data, config, None)
}

/// Residual-aware target training: every masked slot of the corrupted input is
/// blended with the soft token of the frozen reference's prediction, built
/// from the target's own codebook. `reference` is only read.
pub fn train_target_rcd(
    reference: &DenoiserParams,
    data: &Dataset,
    config: &TrainConfig,
    dims: ModelDims,
) -> Result<TrainOutcome> {
    run_training(DenoiserParams::init(dims, config.seed)?, data, config, Some(reference))
}

/// Mean per-token cross-entropy over masked positions of held-out blocks.
///
/// Every block of every record is corrupted `samples_per_block` times with a
/// fixed evaluation seed, so two models scored with the same seed see the
/// same corruptions. With `reference`, inputs carry its residuals as in
/// target training.
pub fn heldout_masked_ce(
    params: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    data: &Dataset,
    block_size: usize,
    samples_per_block: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = substream(seed, stream::EVAL);
    let mut examples = Vec::new();
    for rec in &data.records {
        for start in block_starts(rec.len(), data.prompt_len(rec), block_size) {
            if start + block_size > params.dims.max_len {
                continue;
            }
            for _ in 0..samples_per_block {
                let t = 1.0 - rng.gen::<f64>();
                examples.push(block_example(rec, start, block_size, t, &mut rng)?);
            }
        }
    }
    if examples.is_empty() {
        return invalid("no held-out blocks to score");
    }
    let per_example = examples
        .into_par_iter()
        .map(|ex| {
            let ex = match reference {
                Some(r) => ex.with_reference(r)?,
                None => ex,
            };
            let e = match &ex.soft {
                Some(s) => embed_soft(params, &ex.slots, s)?,
                None => embed(params, &ex.slots, None)?,
            };
            let (logits, _) = forward(params, &e, ex.scheme)?;
            // t = 1 weight, t_min irrelevant: plain summed CE
            let unit = CorruptionSample { t: 1.0, ..ex.sample.clone() };
            let (loss, _) = masked_ce_loss_and_grad(&logits, params.dims.vocab, &unit, 0.01)?;
            Ok((loss, unit.num_masked()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, count) = per_example.iter().fold((0.0, 0usize), |(s, c), (l, n)| (s + l, c + n));
    Ok(sum / count as f64)
}

/// Appends rows to a CSV log, writing the header only when the file is new.
pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| RcdError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
