use rand::distributions::{Distribution, WeightedIndex};

use crate::data::EOT;
use crate::error::{invalid, RcdError, Result};
use crate::model::{embed, forward, AttentionScheme, DenoiserParams, Slot};
use crate::prob::{
    normalized_entropy_of, residual_vector_into, softmax_into, EmbeddingCodebook, ResidualState, VocabDistribution,
};
use crate::rng::{stream, substream, Rng};
use crate::tensor::argmax;

use super::config::{AlphaStrategy, DecodeConfig, DecodeMode, Selection, WarmStart};
use super::trace::{PositionTop, StepRecord, TOP_WIDTH};

/// The block under denoising together with its finished context.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecodeState {
    /// Prompt plus every finished block.
    pub committed_prefix: Vec<u32>,
    pub tokens: Vec<Slot>,
    /// One entry per block position; `Some` only at masked positions in the
    /// residual loop.
    pub residuals: Vec<Option<ResidualState>>,
    pub block_index: usize,
    /// Steps taken in this block.
    pub step_index: usize,
    /// Global index given to the first step of this block.
    pub first_step: usize,
    pub trace: Vec<StepRecord>,
}

impl BlockDecodeState {
    /// A fully masked block of `block_size` positions after `prefix`.
    pub fn new(prefix: Vec<u32>, block_size: usize, block_index: usize, first_step: usize) -> Self {
        Self {
            committed_prefix: prefix,
            tokens: vec![Slot::Mask; block_size],
            residuals: vec![None; block_size],
            block_index,
            step_index: 0,
            first_step,
            trace: Vec::new(),
        }
    }

    pub fn mask_flags(&self) -> Vec<bool> {
        self.tokens.iter().map(|s| s.is_mask()).collect()
    }

    pub fn num_masked(&self) -> usize {
        self.tokens.iter().filter(|s| s.is_mask()).count()
    }

    pub fn is_done(&self) -> bool {
        self.num_masked() == 0
    }

    pub fn scheme(&self) -> AttentionScheme {
        AttentionScheme::new(self.committed_prefix.len(), self.tokens.len())
    }

    fn slots(&self) -> Vec<Slot> {
        let mut s: Vec<Slot> = self.committed_prefix.iter().map(|&t| Slot::Token(t)).collect();
        s.extend_from_slice(&self.tokens);
        s
    }

    /// Finished block ids. Errors while any position is still masked.
    pub fn block_tokens(&self) -> Result<Vec<u32>> {
        self.tokens
            .iter()
            .map(|s| s.token().ok_or_else(|| RcdError::InvalidState("block still has masked positions".into())))
            .collect()
    }
}

/// Result of decoding a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Prompt followed by every decoded block.
    pub tokens: Vec<u32>,
    pub trace: Vec<StepRecord>,
}

impl Decoded {
    pub fn total_steps(&self) -> usize {
        self.trace.len()
    }

    pub fn committed_tokens(&self) -> usize {
        self.trace.iter().map(|r| r.tokens_this_step).sum()
    }
}

/// Residual weight of one position under `strategy`, clamped to `[0, 1]`.
pub fn compute_alpha(p: &VocabDistribution, strategy: AlphaStrategy) -> Result<f64> {
    strategy.validate()?;
    if p.len() < 2 && matches!(strategy, AlphaStrategy::Entropy | AlphaStrategy::InverseEntropy) {
        return invalid("normalized entropy undefined for a single-token vocabulary");
    }
    Ok(alpha_of(p.probs(), strategy))
}

fn alpha_of(p: &[f64], strategy: AlphaStrategy) -> f64 {
    let max = || p.iter().copied().fold(0.0, f64::max);
    let a = match strategy {
        AlphaStrategy::Entropy => normalized_entropy_of(p),
        AlphaStrategy::Linear(c) => c,
        AlphaStrategy::Confidence => max(),
        AlphaStrategy::InverseEntropy => 1.0 - normalized_entropy_of(p),
        AlphaStrategy::InverseConfidence => 1.0 - max(),
    };
    a.clamp(0.0, 1.0)
}

/// Residual state of one position from its logits. The weight always uses
/// `softmax(z / t_res)`; the soft token uses the unscaled distribution unless
/// `scale_delta` is set.
fn residual_from_logits(
    z: &[f64],
    codebook: &EmbeddingCodebook,
    t_res: f64,
    scale_delta: bool,
    strategy: AlphaStrategy,
) -> ResidualState {
    let mut scaled = vec![0.0; z.len()];
    softmax_into(z, t_res, &mut scaled);
    let alpha = alpha_of(&scaled, strategy);
    let mut delta = vec![0.0; codebook.dim()];
    if scale_delta || t_res == 1.0 {
        residual_vector_into(&scaled, codebook, &mut delta);
    } else {
        let mut p = vec![0.0; z.len()];
        softmax_into(z, 1.0, &mut p);
        residual_vector_into(&p, codebook, &mut delta);
    }
    ResidualState { delta, alpha }
}

/// Initial residuals for a fully masked block: one forward pass of `model` on
/// plain mask embeddings, read at unit temperature, with soft tokens built
/// from `codebook` (the decoding model's own).
pub fn warm_start(
    model: &DenoiserParams,
    codebook: &EmbeddingCodebook,
    state: &BlockDecodeState,
    strategy: AlphaStrategy,
) -> Result<Vec<Option<ResidualState>>> {
    if !state.tokens.iter().all(|s| s.is_mask()) {
        return invalid("warm start needs a fully masked block");
    }
    if model.dims.vocab != codebook.vocab() {
        return Err(RcdError::DimensionMismatch(format!(
            "warm-start model predicts {} tokens, codebook has {} rows",
            model.dims.vocab,
            codebook.vocab()
        )));
    }
    let logits = block_logits(model, state, false)?;
    let v = model.dims.vocab;
    Ok(logits
        .chunks(v)
        .map(|z| Some(residual_from_logits(z, codebook, 1.0, false, strategy)))
        .collect())
}

/// Logits (`block x V`) for the current state; with `use_residuals`, masked
/// positions are blended with their residual states.
pub fn block_logits(params: &DenoiserParams, state: &BlockDecodeState, use_residuals: bool) -> Result<Vec<f64>> {
    let slots = state.slots();
    let e = if use_residuals {
        if state.residuals.len() != state.tokens.len() {
            return invalid("residual slots do not match block length");
        }
        let mut full: Vec<Option<ResidualState>> = vec![None; state.committed_prefix.len()];
        full.extend(state.residuals.iter().cloned());
        embed(params, &slots, Some(&full))?
    } else {
        embed(params, &slots, None)?
    };
    Ok(forward(params, &e, state.scheme())?.0)
}

/// Candidates sorted by probability, ties to the lower id.
fn top_candidates(p: &[f64], width: usize) -> Vec<(u32, f64)> {
    let mut ids: Vec<usize> = (0..p.len()).collect();
    ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    ids.into_iter().take(width).map(|j| (j as u32, p[j])).collect()
}

fn step(
    params: &DenoiserParams,
    state: &mut BlockDecodeState,
    config: &DecodeConfig,
    rng: &mut Rng,
    residual_loop: bool,
) -> Result<()> {
    let masked: Vec<usize> = (0..state.tokens.len()).filter(|&i| state.tokens[i].is_mask()).collect();
    if masked.is_empty() {
        return Err(RcdError::InvalidState("no masked position left in block".into()));
    }
    let budget = config.step_budget();
    if state.step_index >= budget {
        return Err(RcdError::InvalidState(format!("step budget of {budget} already spent")));
    }
    let v = params.dims.vocab;
    let logits = block_logits(params, state, residual_loop)?;
    let start = state.committed_prefix.len();

    let mut probs = vec![0.0; v];
    let mut conf = Vec::with_capacity(masked.len());
    let mut best = Vec::with_capacity(masked.len());
    let mut top = Vec::with_capacity(masked.len());
    for &i in &masked {
        softmax_into(&logits[i * v..(i + 1) * v], 1.0, &mut probs);
        let a = argmax(&probs);
        conf.push(probs[a]);
        best.push(a as u32);
        top.push(PositionTop { pos: start + i, top: top_candidates(&probs, TOP_WIDTH.min(v)) });
    }

    // indices into `masked`, most confident first, ties to the lower position
    let mut order: Vec<usize> = (0..masked.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = match config.selection {
        Selection::TopM(m) => order.iter().copied().take(m).collect(),
        Selection::Threshold(tau) => {
            let pass: Vec<usize> = order.iter().copied().filter(|&k| conf[k] >= tau).collect();
            if pass.is_empty() {
                vec![order[0]]
            } else {
                pass
            }
        }
    };
    chosen.sort_unstable();

    let mut committed = Vec::with_capacity(masked.len());
    for &k in &chosen {
        let i = masked[k];
        let id = if config.is_greedy() {
            best[k]
        } else {
            let mut p = vec![0.0; v];
            softmax_into(&logits[i * v..(i + 1) * v], config.sampling_temperature, &mut p);
            let dist = WeightedIndex::new(&p).map_err(|e| RcdError::InvalidState(e.to_string()))?;
            dist.sample(rng) as u32
        };
        state.tokens[i] = Slot::Token(id);
        committed.push((start + i, id));
    }

    let last = state.step_index + 1 == budget;
    let mut forced = false;
    if last {
        for (k, &i) in masked.iter().enumerate() {
            if state.tokens[i].is_mask() {
                state.tokens[i] = Slot::Token(best[k]);
                committed.push((start + i, best[k]));
                forced = true;
            }
        }
        committed.sort_unstable();
    }

    let mut alpha = Vec::new();
    for i in 0..state.tokens.len() {
        state.residuals[i] = if residual_loop && state.tokens[i].is_mask() {
            let r = residual_from_logits(
                &logits[i * v..(i + 1) * v],
                &params.input_codebook,
                config.t_res,
                config.scale_delta,
                config.alpha_strategy,
            );
            alpha.push((start + i, r.alpha));
            Some(r)
        } else {
            None
        };
    }

    state.step_index += 1;
    state.trace.push(StepRecord {
        seq: 0,
        step: state.first_step + state.step_index - 1,
        block: state.block_index,
        block_step: state.step_index,
        tokens_this_step: committed.len(),
        committed,
        top,
        alpha,
        forced,
    });
    Ok(())
}

/// One step of the sequential loop: uncommitted positions go back to the
/// plain mask embedding.
pub fn decode_step_seqd(
    params: &DenoiserParams,
    state: &mut BlockDecodeState,
    config: &DecodeConfig,
    rng: &mut Rng,
) -> Result<()> {
    step(params, state, config, rng, false)
}

/// One step of the residual loop: masked inputs are blended with the
/// residuals of the previous step, and fresh residuals are computed for the
/// positions that stay masked.
pub fn decode_step_rcd(
    params: &DenoiserParams,
    state: &mut BlockDecodeState,
    config: &DecodeConfig,
    rng: &mut Rng,
) -> Result<()> {
    step(params, state, config, rng, true)
}

/// Decodes up to `num_blocks` blocks after `prompt`, stopping after the first
/// block that contains the end-of-text token.
///
/// `reference` is needed only for the reference warm start of the residual
/// loop; it is consulted once per block and never during the steps.
pub fn decode_sequence(
    params: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    prompt: &[u32],
    num_blocks: usize,
    config: &DecodeConfig,
) -> Result<Decoded> {
    config.validate()?;
    if num_blocks == 0 {
        return Ok(Decoded { tokens: prompt.to_vec(), trace: Vec::new() });
    }
    let b = config.block_size;
    if prompt.len() + num_blocks * b > params.dims.max_len {
        return invalid(format!(
            "prompt of {} plus {num_blocks} blocks of {b} exceeds max_len {}",
            prompt.len(),
            params.dims.max_len
        ));
    }
    let rcd = config.mode == DecodeMode::Rcd;
    let warm_model = match (rcd, config.warm_start) {
        (true, WarmStart::Reference) => Some(reference.ok_or_else(|| {
            RcdError::InvalidArgument("reference warm start requested without a reference model".into())
        })?),
        (true, WarmStart::SelfModel) => Some(params),
        _ => None,
    };
    let mut rng = substream(config.seed, stream::SAMPLING);
    let mut tokens = prompt.to_vec();
    let mut trace = Vec::new();
    for block in 0..num_blocks {
        let mut state = BlockDecodeState::new(tokens.clone(), b, block, trace.len());
        if rcd {
            state.residuals = match warm_model {
                Some(m) => warm_start(m, &params.input_codebook, &state, config.alpha_strategy)?,
                None => vec![Some(ResidualState::zero(params.dims.dim)); b],
            };
        }
        while !state.is_done() {
            if rcd {
                decode_step_rcd(params, &mut state, config, &mut rng)?;
            } else {
                decode_step_seqd(params, &mut state, config, &mut rng)?;
            }
        }
        let finished = state.block_tokens()?;
        trace.append(&mut state.trace);
        let stop = finished.contains(&EOT);
        tokens.extend(finished);
        if stop {
            break;
        }
    }
    Ok(Decoded { tokens, trace })
}
