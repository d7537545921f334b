use crate::error::{invalid, RcdError, Result};
use crate::prob::softmax_into;

use super::corrupt::CorruptionSample;

/// `(1 / max(t, t_min)) * sum over masked i of -log p(x0_i)` with the
/// gradient with respect to `logits` (`block_len x vocab`).
pub fn masked_ce_loss_and_grad(
    logits: &[f64],
    vocab: usize,
    sample: &CorruptionSample,
    t_min: f64,
) -> Result<(f64, Vec<f64>)> {
    let b = sample.x0.len();
    if logits.len() != b * vocab {
        return invalid(format!("{} logits for {b} positions of vocab {vocab}", logits.len()));
    }
    if sample.num_masked() == 0 {
        return Err(RcdError::InvalidState("no masked positions in sample".into()));
    }
    let w = 1.0 / sample.t.max(t_min);
    let mut grad = vec![0.0; b * vocab];
    let mut loss = 0.0;
    let mut p = vec![0.0; vocab];
    for i in 0..b {
        if !sample.mask[i] {
            continue;
        }
        let target = sample.x0[i] as usize;
        if target >= vocab {
            return invalid(format!("target id {target} outside vocab {vocab}"));
        }
        let z = &logits[i * vocab..(i + 1) * vocab];
        softmax_into(z, 1.0, &mut p);
        // log-sum-exp form keeps -log p finite when p underflows
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[target];
        let g = &mut grad[i * vocab..(i + 1) * vocab];
        for (gj, pj) in g.iter_mut().zip(&p) {
            *gj = w * pj;
        }
        g[target] -= w;
    }
    Ok((w * loss, grad))
}

/// Loss only; see [`masked_ce_loss_and_grad`].
pub fn masked_ce_loss(logits: &[f64], vocab: usize, sample: &CorruptionSample, t_min: f64) -> Result<f64> {
    masked_ce_loss_and_grad(logits, vocab, sample, t_min).map(|(l, _)| l)
}
