use super::engine::BlockDecodeState;

/// Checks one decoding step against the loop's invariants, given the state
/// before and after it. Returns a description of the first violation.
///
/// - at least one position was committed and committed tokens never change;
/// - positions not committed this step are still masked;
/// - residuals sit exactly on the masked positions (residual loop) or are
///   absent (sequential loop), and every weight lies in `[0, 1]`;
/// - with greedy commits, each committed token ranks first in the step's
///   recorded candidates (forced commits included, since they are argmax).
pub fn audit_step(
    before: &BlockDecodeState,
    after: &BlockDecodeState,
    residual_loop: bool,
    greedy: bool,
) -> std::result::Result<(), String> {
    let rec = after.trace.last().ok_or("no step recorded")?;
    if after.trace.len() != before.trace.len() + 1 || after.step_index != before.step_index + 1 {
        return Err("step did not advance exactly once".into());
    }
    let start = after.committed_prefix.len();
    if after.num_masked() >= before.num_masked() {
        return Err(format!("step {} committed nothing", rec.step));
    }
    if rec.tokens_this_step != before.num_masked() - after.num_masked() || rec.committed.len() != rec.tokens_this_step {
        return Err(format!("step {} miscounts its commits", rec.step));
    }
    for (i, (b, a)) in before.tokens.iter().zip(&after.tokens).enumerate() {
        let committed_now = rec.committed.iter().find(|c| c.0 == start + i);
        match (b.token(), a.token(), committed_now) {
            (Some(x), Some(y), None) if x == y => {}
            (Some(_), _, _) => return Err(format!("committed position {} changed", start + i)),
            (None, Some(y), Some(c)) if c.1 == y => {}
            (None, None, None) => {}
            _ => return Err(format!("position {} disagrees with the commit record", start + i)),
        }
    }
    for (i, (slot, res)) in after.tokens.iter().zip(&after.residuals).enumerate() {
        let want = residual_loop && slot.is_mask();
        if res.is_some() != want {
            return Err(format!("residual misplaced at position {}", start + i));
        }
        if let Some(r) = res {
            if !(0.0..=1.0).contains(&r.alpha) {
                return Err(format!("alpha {} out of range", r.alpha));
            }
        }
    }
    if rec.alpha.iter().any(|(_, a)| !(0.0..=1.0).contains(a)) {
        return Err("recorded alpha out of range".into());
    }
    if greedy {
        for &(pos, id) in &rec.committed {
            let top = rec.top.iter().find(|t| t.pos == pos).ok_or(format!("no candidates for {pos}"))?;
            if top.top.first().map(|c| c.0) != Some(id) {
                return Err(format!("greedy commit at {pos} is not the top candidate"));
            }
        }
    }
    Ok(())
}
