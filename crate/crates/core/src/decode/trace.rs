use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{RcdError, Result};

/// Candidates kept per masked position and step.
pub const TOP_WIDTH: usize = 5;

/// Best candidates at one masked position, most probable first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTop {
    pub pos: usize,
    pub top: Vec<(u32, f64)>,
}

/// One denoising step. Positions are absolute sequence indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Index of the decoded sequence when one trace covers several prompts.
    #[serde(default)]
    pub seq: usize,
    pub step: usize,
    pub block: usize,
    /// 1-based step count within the block.
    pub block_step: usize,
    pub committed: Vec<(usize, u32)>,
    /// Predictions at every position that was masked when the step began.
    pub top: Vec<PositionTop>,
    /// Residual weights handed to the next step, one per still-masked
    /// position. Empty for the sequential loop.
    pub alpha: Vec<(usize, f64)>,
    pub tokens_this_step: usize,
    /// Set when the step budget ran out and leftovers were committed by argmax.
    pub forced: bool,
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(mut w: W, trace: &[StepRecord]) -> Result<()> {
    for rec in trace {
        let line = serde_json::to_string(rec).map_err(|e| RcdError::Parse(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| RcdError::Parse(format!("trace line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
