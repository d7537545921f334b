use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::decode::StepRecord;
use crate::error::{invalid, RcdError, Result};

/// Recall of final tokens in the top-k predictions, one value per step
/// within a block (`values[s - 1]` is step `s`).
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve {
    pub k: usize,
    /// Longest block, in steps.
    pub k_max: usize,
    pub values: Vec<f64>,
}

/// For each within-block step `s`, the fraction of decoded positions whose
/// final token is among that position's step-`s` top-`k` candidates.
///
/// A position committed before step `s` counts as a hit, and so does every
/// position of a block that finished in fewer than `s` steps. Values are
/// pooled over all blocks of the trace.
pub fn recall_at_k(trace: &[StepRecord], final_tokens: &[u32], k: usize) -> Result<RecallCurve> {
    if trace.iter().any(|r| r.seq != 0) {
        return invalid("trace covers several sequences; use recall_at_k_multi");
    }
    recall_at_k_multi(trace, std::slice::from_ref(&final_tokens.to_vec()), k)
}

/// [`recall_at_k`] pooled over several sequences; `finals[s]` holds the
/// final tokens of the records with `seq == s`.
pub fn recall_at_k_multi(trace: &[StepRecord], finals: &[Vec<u32>], k: usize) -> Result<RecallCurve> {
    if k == 0 {
        return invalid("k must be positive");
    }
    if trace.is_empty() {
        return invalid("empty trace");
    }
    let width = trace.iter().flat_map(|r| r.top.iter().map(|t| t.top.len())).min().unwrap_or(0);
    if k > width {
        return invalid(format!("k = {k} exceeds the recorded top width {width}"));
    }
    let mut blocks: BTreeMap<(usize, usize), Vec<&StepRecord>> = BTreeMap::new();
    for r in trace {
        blocks.entry((r.seq, r.block)).or_default().push(r);
    }
    let k_max = blocks.values().map(Vec::len).max().unwrap_or(0);
    let mut hits = vec![0usize; k_max];
    let mut total = 0usize;
    for (&(seq, _), steps) in &blocks {
        let final_tokens = finals
            .get(seq)
            .ok_or_else(|| RcdError::InvalidArgument(format!("no final tokens for sequence {seq}")))?;
        let positions: BTreeSet<usize> = steps.iter().flat_map(|r| r.committed.iter().map(|c| c.0)).collect();
        total += positions.len();
        let mut done: BTreeSet<usize> = BTreeSet::new();
        for (s, hit) in hits.iter_mut().enumerate() {
            let Some(rec) = steps.get(s) else {
                *hit += positions.len();
                continue;
            };
            let mut h = done.len();
            for pt in &rec.top {
                let fin = *final_tokens.get(pt.pos).ok_or_else(|| {
                    RcdError::InvalidArgument(format!("position {} beyond final tokens", pt.pos))
                })?;
                if pt.top.iter().take(k).any(|&(id, _)| id == fin) {
                    h += 1;
                }
            }
            *hit += h;
            done.extend(rec.committed.iter().map(|c| c.0));
        }
    }
    if total == 0 {
        return invalid("trace commits no position");
    }
    Ok(RecallCurve { k, k_max, values: hits.iter().map(|&h| h as f64 / total as f64).collect() })
}

#[derive(Serialize)]
struct RecallRow {
    k: usize,
    step: usize,
    recall: f64,
}

/// Long-format CSV `k,step,recall`.
pub fn write_recall_csv(path: &Path, curves: &[RecallCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RcdError::Io(std::io::Error::other(e)))?;
    for c in curves {
        for (s, &recall) in c.values.iter().enumerate() {
            w.serialize(RecallRow { k: c.k, step: s + 1, recall })
                .map_err(|e| RcdError::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}
