use rayon::prelude::*;

use crate::data::{Dataset, Tokenizer, EOT_CHAR};
use crate::decode::{decode_sequence, DecodeConfig};
use crate::error::{invalid, Result};
use crate::model::DenoiserParams;

/// How an answer is read off a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    /// Last contiguous digit run before end-of-text.
    Digits,
    /// Whole completion up to end-of-text.
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskItem {
    pub prompt: Vec<u32>,
    pub answer: String,
}

#[derive(Debug, Clone)]
pub struct TaskSet {
    pub tokenizer: Tokenizer,
    pub kind: AnswerKind,
    pub items: Vec<TaskItem>,
    /// Tokens to generate after each prompt (rounded up to whole blocks).
    pub max_new_tokens: usize,
}

/// Last run of ASCII digits in `text` before the first end-of-text mark.
pub fn extract_digits(text: &str) -> Option<String> {
    let body = text.split(EOT_CHAR).next().unwrap_or("");
    let bytes = body.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end].iter().rposition(|b| !b.is_ascii_digit()).map_or(0, |i| i + 1);
    Some(body[start..end].to_string())
}

impl AnswerKind {
    pub fn extract(self, completion: &str) -> Option<String> {
        match self {
            AnswerKind::Digits => extract_digits(completion),
            AnswerKind::Text => completion.split_once(EOT_CHAR).map(|(a, _)| a.to_string()),
        }
    }
}

impl TaskSet {
    /// Turns held-out records into prompts (up to the dataset's prompt end)
    /// and expected answers (read from the rest of each record).
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let tokenizer = data.tokenizer()?;
        let kind = if tokenizer.name() == "arith" { AnswerKind::Digits } else { AnswerKind::Text };
        let mut items = Vec::with_capacity(data.len());
        let mut max_new = 0;
        for rec in &data.records {
            let p = data.prompt_len(rec);
            if p == 0 || p == rec.len() {
                return invalid("task records need a prompt and a completion");
            }
            let completion = tokenizer.decode(&rec[p..])?;
            let Some(answer) = kind.extract(&completion) else {
                return invalid(format!("record completion '{completion}' has no answer"));
            };
            max_new = max_new.max(rec.len() - p);
            items.push(TaskItem { prompt: rec[..p].to_vec(), answer });
        }
        Ok(Self { tokenizer, kind, items, max_new_tokens: max_new })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Set when the task set was empty and accuracy defaulted to zero.
    pub empty_warning: bool,
    pub total_steps: usize,
    pub committed_tokens: usize,
    pub generated_tokens: usize,
}

impl AccuracyReport {
    pub fn tokens_per_step(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.committed_tokens as f64 / self.total_steps as f64
        }
    }
}

/// Decodes every prompt of `set` and scores it with the set's own answer
/// extraction.
pub fn task_accuracy(
    params: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    config: &DecodeConfig,
    set: &TaskSet,
) -> Result<AccuracyReport> {
    let kind = set.kind;
    task_accuracy_with(params, reference, config, set, |item, completion| {
        kind.extract(completion).as_deref() == Some(item.answer.as_str())
    })
}

/// Like [`task_accuracy`] with a caller-supplied checker receiving the item
/// and the decoded completion text.
pub fn task_accuracy_with<F>(
    params: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    config: &DecodeConfig,
    set: &TaskSet,
    check: F,
) -> Result<AccuracyReport>
where
    F: Fn(&TaskItem, &str) -> bool + Sync,
{
    if set.items.is_empty() {
        return Ok(AccuracyReport {
            accuracy: 0.0,
            correct: 0,
            total: 0,
            empty_warning: true,
            total_steps: 0,
            committed_tokens: 0,
            generated_tokens: 0,
        });
    }
    let num_blocks = set.max_new_tokens.div_ceil(config.block_size);
    let runs = set
        .items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let cfg = DecodeConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
            let out = decode_sequence(params, reference, &item.prompt, num_blocks, &cfg)?;
            let completion = set.tokenizer.decode(&out.tokens[item.prompt.len()..])?;
            Ok((
                check(item, &completion),
                out.total_steps(),
                out.committed_tokens(),
                out.tokens.len() - item.prompt.len(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = runs.iter().filter(|r| r.0).count();
    Ok(AccuracyReport {
        accuracy: correct as f64 / runs.len() as f64,
        correct,
        total: runs.len(),
        empty_warning: false,
        total_steps: runs.iter().map(|r| r.1).sum(),
        committed_tokens: runs.iter().map(|r| r.2).sum(),
        generated_tokens: runs.iter().map(|r| r.3).sum(),
    })
}
