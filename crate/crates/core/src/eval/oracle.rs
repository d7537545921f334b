use rayon::prelude::*;

use crate::data::MarkovSpec;
use crate::error::{invalid, Result};
use crate::model::{embed, forward, AttentionScheme, DenoiserParams, Slot};
use crate::prob::{softmax_into, VocabDistribution};

fn normalize(v: &mut [f64]) -> Result<()> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) {
        return invalid("observed context has zero probability under the chain");
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

/// Exact conditional distribution (over chain states) of every unobserved
/// position of `context`, given all observed ones. `context[0]` is drawn from
/// the chain's initial distribution.
///
/// Forward and backward messages are normalized per position, so the result
/// is stable for long blocks.
pub fn markov_posterior_oracle(spec: &MarkovSpec, context: &[Option<usize>]) -> Result<Vec<Option<VocabDistribution>>> {
    spec.validate()?;
    let n = spec.states;
    let len = context.len();
    if let Some(&s) = context.iter().flatten().find(|&&s| s >= n) {
        return invalid(format!("state {s} outside a {n}-state chain"));
    }
    let evidence = |i: usize, s: usize| match context[i] {
        Some(o) => f64::from(u8::from(o == s)),
        None => 1.0,
    };
    let mut fwd = vec![vec![0.0; n]; len];
    for i in 0..len {
        for s in 0..n {
            let prior = if i == 0 {
                spec.initial[s]
            } else {
                (0..n).map(|r| fwd[i - 1][r] * spec.transition[r][s]).sum()
            };
            fwd[i][s] = prior * evidence(i, s);
        }
        normalize(&mut fwd[i])?;
    }
    let mut bwd = vec![vec![1.0; n]; len];
    for i in (0..len.saturating_sub(1)).rev() {
        for s in 0..n {
            bwd[i][s] = (0..n).map(|r| spec.transition[s][r] * evidence(i + 1, r) * bwd[i + 1][r]).sum();
        }
        normalize(&mut bwd[i])?;
    }
    (0..len)
        .map(|i| {
            if context[i].is_some() {
                return Ok(None);
            }
            let mut post: Vec<f64> = (0..n).map(|s| fwd[i][s] * bwd[i][s]).collect();
            normalize(&mut post)?;
            Ok(Some(VocabDistribution::from_kernel(post)))
        })
        .collect()
}

/// Same conditionals by enumerating every completion of the unobserved
/// positions. Exponential; meant for cross-checking short blocks.
pub fn brute_force_posterior(spec: &MarkovSpec, context: &[Option<usize>]) -> Result<Vec<Option<VocabDistribution>>> {
    spec.validate()?;
    let n = spec.states;
    let hidden: Vec<usize> = (0..context.len()).filter(|&i| context[i].is_none()).collect();
    let combos = n.checked_pow(hidden.len() as u32).filter(|&c| c <= 1 << 24);
    let Some(combos) = combos else {
        return invalid("too many hidden positions to enumerate");
    };
    let mut marg = vec![vec![0.0; n]; hidden.len()];
    let mut seq: Vec<usize> = context.iter().map(|s| s.unwrap_or(0)).collect();
    let mut total = 0.0;
    for code in 0..combos {
        let mut c = code;
        for &h in &hidden {
            seq[h] = c % n;
            c /= n;
        }
        let mut p = spec.initial[seq[0]];
        for w in seq.windows(2) {
            p *= spec.transition[w[0]][w[1]];
        }
        total += p;
        for (k, &h) in hidden.iter().enumerate() {
            marg[k][seq[h]] += p;
        }
    }
    if !(total > 0.0) {
        return invalid("observed context has zero probability under the chain");
    }
    let mut out = vec![None; context.len()];
    for (k, &h) in hidden.iter().enumerate() {
        out[h] = Some(VocabDistribution::from_kernel(marg[k].iter().map(|x| x / total).collect()));
    }
    Ok(out)
}

/// Mean `KL(oracle || model)` over `blocks` when only the middle position of
/// each block is masked and the whole block is denoised at once.
pub fn markov_mask_kl(params: &DenoiserParams, spec: &MarkovSpec, blocks: &[Vec<u32>]) -> Result<f64> {
    if blocks.is_empty() {
        return invalid("no blocks to score");
    }
    let v = params.dims.vocab;
    if v != spec.states + 2 {
        return invalid(format!("model vocab {v} does not fit a {}-state chain", spec.states));
    }
    let kls = blocks
        .par_iter()
        .map(|block| {
            let mid = block.len() / 2;
            let context = block
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    if i == mid {
                        Ok(None)
                    } else {
                        MarkovSpec::state_of(t).map(Some).ok_or_else(|| {
                            crate::error::RcdError::InvalidArgument(format!("token {t} is not a chain state"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let truth = markov_posterior_oracle(spec, &context)?[mid].clone().expect("mid is masked");
            let slots: Vec<Slot> = context.iter().map(|c| c.map_or(Slot::Mask, |s| Slot::Token(MarkovSpec::token_of(s)))).collect();
            let e = embed(params, &slots, None)?;
            let (logits, _) = forward(params, &e, AttentionScheme::new(0, block.len()))?;
            let mut p = vec![0.0; v];
            softmax_into(&logits[mid * v..(mid + 1) * v], 1.0, &mut p);
            Ok(truth
                .probs()
                .iter()
                .enumerate()
                .filter(|(_, q)| **q > 0.0)
                .map(|(s, q)| q * (q / p[s + 2]).ln())
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(kls.iter().sum::<f64>() / kls.len() as f64)
}
