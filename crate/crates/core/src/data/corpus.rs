use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream, substream};

use super::dataset::Dataset;
use super::tokenizer::{Tokenizer, EOT_CHAR};

/// Uniform operand with exactly `digits` digits.
pub(crate) fn sample_operand<R: Rng>(rng: &mut R, digits: u32) -> u64 {
    if digits == 1 {
        rng.gen_range(0..10)
    } else {
        rng.gen_range(10u64.pow(digits - 1)..10u64.pow(digits))
    }
}

/// `"a+b=c␄"`, or with `with_cot` one `x+y+carry>colsum` step per column from
/// the least significant digit: `"47+85=7+5+0>12,4+8+1>13=132␄"`.
pub fn addition_record(a: u64, b: u64, with_cot: bool) -> String {
    let mut s = format!("{a}+{b}=");
    if with_cot {
        let da: Vec<u64> = a.to_string().bytes().rev().map(|c| u64::from(c - b'0')).collect();
        let db: Vec<u64> = b.to_string().bytes().rev().map(|c| u64::from(c - b'0')).collect();
        let mut carry = 0;
        let steps: Vec<String> = (0..da.len().max(db.len()))
            .map(|i| {
                let x = da.get(i).copied().unwrap_or(0);
                let y = db.get(i).copied().unwrap_or(0);
                let col = x + y + carry;
                let step = format!("{x}+{y}+{carry}>{col}");
                carry = col / 10;
                step
            })
            .collect();
        s.push_str(&steps.join(","));
        s.push('=');
    }
    s.push_str(&(a + b).to_string());
    s.push(EOT_CHAR);
    s
}

/// Re-parses a record produced by [`addition_record`] and checks its sum
/// (and its column steps, when present).
pub fn check_addition_record(text: &str) -> bool {
    let Some(body) = text.strip_suffix(EOT_CHAR) else { return false };
    let parts: Vec<&str> = body.split('=').collect();
    let (lhs, steps, rhs) = match parts.as_slice() {
        [lhs, rhs] => (*lhs, None, *rhs),
        [lhs, steps, rhs] => (*lhs, Some(*steps), *rhs),
        _ => return false,
    };
    let Some((a, b)) = lhs.split_once('+') else { return false };
    let (Ok(a), Ok(b), Ok(c)) = (a.parse::<u64>(), b.parse::<u64>(), rhs.parse::<u64>()) else {
        return false;
    };
    if a + b != c {
        return false;
    }
    match steps {
        None => true,
        Some(_) => addition_record(a, b, true) == text,
    }
}

/// Addition problems with operand widths drawn from `min_digits..=max_digits`.
pub fn gen_addition_corpus(
    min_digits: u32,
    max_digits: u32,
    count: usize,
    with_cot: bool,
    seed: u64,
) -> Result<Dataset> {
    if min_digits < 1 || max_digits > 6 || min_digits > max_digits {
        return invalid(format!("digit range {min_digits}..={max_digits} must lie in 1..=6"));
    }
    let tokenizer = Tokenizer::arithmetic();
    let mut rng = substream(seed, stream::DATA);
    let records = (0..count)
        .map(|_| {
            let na = rng.gen_range(min_digits..=max_digits);
            let nb = rng.gen_range(min_digits..=max_digits);
            let a = sample_operand(&mut rng, na);
            let b = sample_operand(&mut rng, nb);
            tokenizer.encode(&addition_record(a, b, with_cot))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(&tokenizer, Some('='), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StringTask {
    Copy,
    Reverse,
}

impl StringTask {
    fn marker(self) -> char {
        match self {
            StringTask::Copy => '>',
            StringTask::Reverse => '<',
        }
    }

    pub fn answer(self, s: &str) -> String {
        match self {
            StringTask::Copy => s.to_string(),
            StringTask::Reverse => s.chars().rev().collect(),
        }
    }
}

/// `">abc=abc␄"` for copy, `"<abc=cba␄"` for reverse.
pub fn string_task_record(task: StringTask, s: &str) -> String {
    format!("{}{s}={}{EOT_CHAR}", task.marker(), task.answer(s))
}

pub(crate) fn random_letters<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| char::from(b'a' + rng.gen_range(0..10u8))).collect()
}

/// Copy/reverse records over the letters `a..j`.
pub fn gen_string_corpus(
    tasks: &[StringTask],
    min_len: usize,
    max_len: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    if tasks.is_empty() || min_len == 0 || min_len > max_len {
        return invalid("need at least one task and 1 <= min_len <= max_len");
    }
    let tokenizer = Tokenizer::strings();
    let mut rng = substream(seed, stream::DATA);
    let records = (0..count)
        .map(|_| {
            let task = tasks[rng.gen_range(0..tasks.len())];
            let len = rng.gen_range(min_len..=max_len);
            let s = random_letters(&mut rng, len);
            tokenizer.encode(&string_task_record(task, &s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(&tokenizer, Some('='), records))
}
