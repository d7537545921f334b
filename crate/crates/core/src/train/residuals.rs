use crate::error::{invalid, Result};
use crate::model::{embed, forward, AttentionScheme, DenoiserParams, Slot, SoftResidual};
use crate::prob::{normalized_entropy_of, residual_vector_into, softmax_into, EmbeddingCodebook, ResidualState};

/// Runs the frozen reference on plain mask embeddings and returns, for every
/// masked block position, its predictive distribution (temperature 1) and
/// normalized-entropy weight. Unmasked positions get `None`.
///
/// `slots` covers prefix and block; the result covers the block only.
pub fn reference_signal(
    reference: &DenoiserParams,
    slots: &[Slot],
    scheme: AttentionScheme,
) -> Result<Vec<Option<SoftResidual>>> {
    let v = reference.dims.vocab;
    let e = embed(reference, slots, None)?;
    let (logits, _) = forward(reference, &e, scheme)?;
    let (start, end) = scheme.block_span;
    Ok((start..end)
        .enumerate()
        .map(|(bi, pos)| {
            slots[pos].is_mask().then(|| {
                let mut probs = vec![0.0; v];
                softmax_into(&logits[bi * v..(bi + 1) * v], 1.0, &mut probs);
                let alpha = normalized_entropy_of(&probs);
                SoftResidual { alpha, probs }
            })
        })
        .collect())
}

/// Residual states for the masked block positions of `slots`: weights from
/// the reference, soft tokens built from `target_codebook`.
///
/// Reference and target may differ in width; they must share the vocabulary.
pub fn make_training_residuals(
    reference: &DenoiserParams,
    target_codebook: &EmbeddingCodebook,
    slots: &[Slot],
    scheme: AttentionScheme,
) -> Result<Vec<Option<ResidualState>>> {
    if reference.dims.vocab != target_codebook.vocab() {
        return invalid(format!(
            "reference predicts {} tokens, target codebook has {} rows",
            reference.dims.vocab,
            target_codebook.vocab()
        ));
    }
    let signal = reference_signal(reference, slots, scheme)?;
    if !signal.iter().any(Option::is_some) {
        return invalid("block has no masked position");
    }
    Ok(signal
        .into_iter()
        .map(|s| {
            s.map(|s| {
                let mut delta = vec![0.0; target_codebook.dim()];
                residual_vector_into(&s.probs, target_codebook, &mut delta);
                ResidualState { delta, alpha: s.alpha }
            })
        })
        .collect())
}
